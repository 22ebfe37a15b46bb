use std::sync::{Arc, Mutex, OnceLock};

use super::scenario::Scenario;
use crate::constants::{
    bict, muckenhoupt_a2, one_tailed_a2, testing_sweep, ConstantReport, CubeFamily, FamilyDescriptor, TestingSweep,
};
use crate::error::Result;
use crate::geometry::{Anchor, FamilySpec};
use crate::kernels::{KernelSpec, TruncationWindow};
use crate::measures::{doubling_profile, DiscreteMeasure, DoublingProfile};
use crate::operators::{default_window, operator_norm, NormEstimate, OperatorMatrix};

fn cached<'a, T>(cell: &'a OnceLock<T>, f: impl FnOnce() -> Result<T>) -> Result<&'a T> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = f()?;
    Ok(cell.get_or_init(|| v))
}

/// A scenario realized at one lattice depth: measures, kernel, operator and
/// cube family, with lazily computed constants shared by all suites.
pub struct Instance {
    pub scenario: Scenario,
    pub depth: u32,
    pub sigma: DiscreteMeasure,
    pub omega: DiscreteMeasure,
    pub kernel: KernelSpec,
    pub window: TruncationWindow,
    pub operator: OperatorMatrix,
    pub family_spec: FamilySpec,
    pub family: CubeFamily,
    norm: OnceLock<NormEstimate>,
    adjoint: OnceLock<OperatorMatrix>,
    sweep: OnceLock<TestingSweep>,
    adjoint_sweep: OnceLock<TestingSweep>,
    bict: OnceLock<ConstantReport>,
    a2: OnceLock<[ConstantReport; 3]>,
    sigma_doubling: OnceLock<DoublingProfile>,
    omega_doubling: OnceLock<DoublingProfile>,
    closed: OnceLock<CubeFamily>,
    closed_sweeps: Mutex<Vec<(u32, Anchor, Arc<TestingSweep>)>>,
}

impl Instance {
    /// The scenario at depth `L + extra`. The family's explicit `max_level`
    /// moves with the lattice; an explicit window is kept as is.
    pub fn build(scenario: &Scenario, extra: u32) -> Result<Instance> {
        let depth = scenario.depth + extra;
        let n = scenario.n;
        let sigma = scenario.sigma_measure(depth)?;
        let omega = scenario.omega_measure(depth)?;
        let kernel = KernelSpec::from_config(&scenario.kernel, n)?;
        let window = scenario.window.unwrap_or_else(|| default_window(n, depth));
        let operator = OperatorMatrix::assemble_with_budget(&kernel, &window, &sigma, &omega, scenario.memory_budget)?;
        let mut family_spec = scenario.family.clone();
        if let Some(m) = family_spec.max_level.as_mut() {
            *m += extra;
        }
        let family = CubeFamily::build(&family_spec, n, depth)?;
        Ok(Instance {
            scenario: scenario.clone(),
            depth,
            sigma,
            omega,
            kernel,
            window,
            operator,
            family_spec,
            family,
            norm: OnceLock::new(),
            adjoint: OnceLock::new(),
            sweep: OnceLock::new(),
            adjoint_sweep: OnceLock::new(),
            bict: OnceLock::new(),
            a2: OnceLock::new(),
            sigma_doubling: OnceLock::new(),
            omega_doubling: OnceLock::new(),
            closed: OnceLock::new(),
            closed_sweeps: Mutex::new(Vec::new()),
        })
    }

    pub fn n(&self) -> usize {
        self.scenario.n
    }

    pub fn norm(&self) -> Result<&NormEstimate> {
        cached(&self.norm, || operator_norm(&self.operator, self.scenario.norm_tol))
    }

    /// The certified upper bound of the operator norm.
    pub fn norm_upper(&self) -> Result<f64> {
        Ok(self.norm()?.upper)
    }

    pub fn adjoint(&self) -> &OperatorMatrix {
        self.adjoint.get_or_init(|| self.operator.adjoint())
    }

    /// Centered testing values for `|β| < κ` over the scenario family.
    pub fn sweep(&self) -> Result<&TestingSweep> {
        cached(&self.sweep, || {
            testing_sweep(&self.operator, &self.sigma, &self.family, self.scenario.kappa, Anchor::Center)
        })
    }

    /// Cube testing of the adjoint (`β = 0`), giving `𝔗*`.
    pub fn adjoint_sweep(&self) -> Result<&TestingSweep> {
        cached(&self.adjoint_sweep, || testing_sweep(self.adjoint(), &self.omega, &self.family, 1, Anchor::Center))
    }

    pub fn bict(&self) -> Result<&ConstantReport> {
        cached(&self.bict, || bict(&self.operator, &self.sigma, &self.omega, &self.family, self.scenario.bict_rounds))
    }

    /// `[A₂^α, 𝒜₂^α, 𝒜₂^{α,*}]` over the scenario family.
    pub fn muckenhoupt(&self) -> Result<&[ConstantReport; 3]> {
        cached(&self.a2, || {
            let a = self.kernel.alpha;
            Ok([
                muckenhoupt_a2(&self.sigma, &self.omega, a, &self.family)?,
                one_tailed_a2(&self.sigma, &self.omega, a, &self.family, false)?,
                one_tailed_a2(&self.sigma, &self.omega, a, &self.family, true)?,
            ])
        })
    }

    /// Operator norm as a report (upper bound, no witness).
    pub fn norm_report(&self) -> Result<ConstantReport> {
        let mut r = ConstantReport::new(format!("norm({})", self.kernel.name()), FamilyDescriptor::default());
        r.value = self.norm_upper()?;
        Ok(r)
    }

    /// Dyadic cubes whose doubles are resolved by the lattice.
    pub fn doubling_family(&self) -> Result<CubeFamily> {
        CubeFamily::build(&FamilySpec::dyadic(self.depth - 1), self.n(), self.depth)
    }

    pub fn sigma_doubling(&self) -> Result<&DoublingProfile> {
        cached(&self.sigma_doubling, || doubling_profile(&self.sigma, &self.doubling_family()?.cubes))
    }

    pub fn omega_doubling(&self) -> Result<&DoublingProfile> {
        cached(&self.omega_doubling, || doubling_profile(&self.omega, &self.doubling_family()?.cubes))
    }

    /// The scenario family extended to the lattice cells and without the
    /// interior restriction, so that it holds every dyadic subcube of its
    /// members.
    pub fn closed_family(&self) -> Result<&CubeFamily> {
        cached(&self.closed, || {
            let spec = FamilySpec { max_level: None, interior_only: false, ..self.family_spec.clone() };
            if spec.max_level(self.depth) == self.family_spec.max_level(self.depth) && !self.family_spec.interior_only {
                return Ok(self.family.clone());
            }
            CubeFamily::build(&spec, self.n(), self.depth)
        })
    }

    /// Testing values over [`closed_family`](Self::closed_family), computed
    /// once per `(κ, anchor)`.
    pub fn closed_sweep(&self, kappa: u32, anchor: Anchor) -> Result<Arc<TestingSweep>> {
        let hit = self.closed_sweeps.lock().expect("cache lock").iter().find(|e| e.0 == kappa && e.1 == anchor).map(|e| e.2.clone());
        if let Some(s) = hit {
            return Ok(s);
        }
        let family = self.closed_family()?;
        let sweep = if kappa == self.scenario.kappa && anchor == Anchor::Center && *family == self.family {
            self.sweep()?.clone()
        } else {
            testing_sweep(&self.operator, &self.sigma, family, kappa, anchor)?
        };
        let sweep = Arc::new(sweep);
        self.closed_sweeps.lock().expect("cache lock").push((kappa, anchor, sweep.clone()));
        Ok(sweep)
    }
}
