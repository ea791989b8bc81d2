//! Empirical check that inference commutes with factor-graph isomorphisms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use fg_core::bp::{run_bp, BpConfig};
use fg_core::witness::{apply_witness, PermutationWitness, Symmetry};
use fg_core::FactorGraph;
use fg_models::{FeGnnModel, FeNbpModel};

use crate::error::Result;

/// Anything that maps a graph to per-variable marginals.
pub enum Audited<'a> {
    Bp(BpConfig),
    Fenbp(&'a FeNbpModel),
    Fegnn(&'a FeGnnModel),
}

impl Audited<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Audited::Bp(_) => "bp",
            Audited::Fenbp(_) => "fenbp",
            Audited::Fegnn(_) => "fegnn",
        }
    }

    pub fn marginals(&self, g: &FactorGraph) -> Result<Vec<Vec<f64>>> {
        Ok(match self {
            Audited::Bp(cfg) => run_bp(g, cfg).beliefs.variable_beliefs,
            Audited::Fenbp(m) => m.forward(g)?.beliefs.variable_beliefs,
            Audited::Fegnn(m) => m.forward(g)?,
        })
    }

    /// Whether the model is guaranteed to respect `s`.
    pub fn asserts(&self, s: Symmetry) -> bool {
        !matches!((self, s), (Audited::Fegnn(_), Symmetry::VariableAssignment))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub symmetry: String,
    pub asserted: bool,
    pub checks: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    /// `None` for symmetries the model does not claim.
    pub passed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub model: String,
    pub symmetries: Vec<SymmetryReport>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.symmetries.iter().all(|s| s.passed != Some(false))
    }

    pub fn get(&self, s: Symmetry) -> Option<&SymmetryReport> {
        self.symmetries.iter().find(|r| r.symmetry == s.name())
    }
}

/// Largest entrywise difference between two marginal lists; NaN counts as
/// infinite, and so does a shape disagreement.
pub fn max_deviation(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .map(|d| if d.is_nan() { f64::INFINITY } else { d })
        .fold(0.0, f64::max)
}

/// For each graph and symmetry, draws `witnesses` random witnesses and
/// compares `model(apply(g, w))` with `w` applied to `model(g)`.
pub fn audit_equivariance(
    model: &Audited,
    graphs: &[FactorGraph],
    symmetries: &[Symmetry],
    witnesses: usize,
    tolerance: f64,
    seed: u64,
) -> Result<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports: Vec<SymmetryReport> = symmetries
        .iter()
        .map(|&s| SymmetryReport {
            symmetry: s.name().to_string(),
            asserted: model.asserts(s),
            checks: 0,
            max_deviation: 0.0,
            tolerance,
            passed: None,
        })
        .collect();
    for g in graphs {
        let base = model.marginals(g)?;
        for (r, &s) in reports.iter_mut().zip(symmetries) {
            for _ in 0..witnesses {
                let w = PermutationWitness::random(g, s, &mut rng);
                let g2 = apply_witness(g, &w)?;
                let out = model.marginals(&g2)?;
                let dev = max_deviation(&w.permute_marginals(&base), &out);
                r.max_deviation = r.max_deviation.max(dev);
                r.checks += 1;
            }
        }
    }
    for r in &mut reports {
        if r.asserted {
            r.passed = Some(r.max_deviation < tolerance);
        }
        log::info!("{} {}: max deviation {:e}", model.name(), r.symmetry, r.max_deviation);
    }
    Ok(AuditReport {
        model: model.name().to_string(),
        symmetries: reports,
    })
}
