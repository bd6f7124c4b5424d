//! Dense multi-objective Q tables and the distances used to compare them.
//!
//! A [`DiscreteMOQ`] stores one m-vector of expected discounted returns per
//! (state, action, preference) triple, over an explicit finite preference
//! grid. Two tables on the same grid are compared with [`pseudo_metric_d`],
//! the largest scalarized gap sup |ω⊺(Q − Q′)| with each entry judged under
//! its own preference, and with [`cross_metric_d`], which judges every
//! entry under every grid preference. The optimality backup is γ-Lipschitz
//! from the cross distance into the same-preference one; the tabular tests
//! witness that neither distance alone is contracted in the worst case.

use ndarray::Array4;

use crate::pref::Preference;
use crate::real::{dot, Real};
use crate::{Error, Result};

/// Dense Q table: `values[[s, a, p, k]]` is objective k of the return
/// vector at state s, action a, preference grid index p.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMOQ<F> {
    // [state, action, pref, objective]
    values: Array4<F>,
    prefs: Vec<Preference<F>>,
}

impl<F: Real> DiscreteMOQ<F> {
    /// Wraps a value table and its preference grid, checking that the grid
    /// axis and objective axis agree with the preferences supplied.
    pub fn new(values: Array4<F>, prefs: Vec<Preference<F>>) -> Result<Self> {
        if prefs.is_empty() {
            return Err(Error::invalid("preference grid must be non-empty"));
        }
        let m = prefs[0].dim();
        if prefs.iter().any(|p| p.dim() != m) {
            return Err(Error::invalid("preference grid mixes objective counts"));
        }
        let (_, _, p_axis, k_axis) = values.dim();
        if p_axis != prefs.len() {
            return Err(Error::invalid(format!(
                "value table has {} preference slots, grid has {}",
                p_axis,
                prefs.len()
            )));
        }
        if k_axis != m {
            return Err(Error::invalid(format!(
                "value table has {k_axis} objectives, preferences have {m}"
            )));
        }
        Ok(Self { values, prefs })
    }

    /// All-zero table over the given shape and grid.
    pub fn zeros(
        state_count: usize,
        action_count: usize,
        prefs: Vec<Preference<F>>,
    ) -> Result<Self> {
        if prefs.is_empty() {
            return Err(Error::invalid("preference grid must be non-empty"));
        }
        let m = prefs[0].dim();
        Self::new(Array4::zeros((state_count, action_count, prefs.len(), m)), prefs)
    }

    pub fn state_count(&self) -> usize {
        self.values.dim().0
    }

    pub fn action_count(&self) -> usize {
        self.values.dim().1
    }

    pub fn objective_count(&self) -> usize {
        self.values.dim().3
    }

    pub fn preference_set(&self) -> &[Preference<F>] {
        &self.prefs
    }

    pub fn values(&self) -> &Array4<F> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array4<F> {
        &mut self.values
    }

    /// Return vector at (s, a, pref index p) as a slice view.
    pub fn vector(&self, s: usize, a: usize, p: usize) -> Vec<F> {
        self.values.slice(ndarray::s![s, a, p, ..]).to_vec()
    }

    /// Scalarized value ω_p⊺Q(s, a, ω_p) at grid index p.
    pub fn scalarized(&self, s: usize, a: usize, p: usize) -> F {
        let row = self.values.slice(ndarray::s![s, a, p, ..]);
        dot(self.prefs[p].weights(), row.as_slice().expect("value table is contiguous"))
    }
}

/// True when both grids hold exactly the same preferences in the same order.
fn grids_match<F: Real>(a: &[Preference<F>], b: &[Preference<F>]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.weights() == y.weights())
}

/// Shared validation for the two table distances.
fn check_comparable<F: Real>(q1: &DiscreteMOQ<F>, q2: &DiscreteMOQ<F>) -> Result<()> {
    if q1.values.dim() != q2.values.dim() {
        return Err(Error::invalid(format!(
            "pseudo-metric over mismatched table shapes {:?} vs {:?}",
            q1.values.dim(),
            q2.values.dim()
        )));
    }
    if !grids_match(&q1.prefs, &q2.prefs) {
        return Err(Error::invalid("pseudo-metric over different preference grids"));
    }
    Ok(())
}

/// Largest scalarized disagreement sup over (s, a, ω) of |ω⊺(Q − Q′)|,
/// each entry measured under its own grid preference.
///
/// The tables must share the same shape and the identical preference grid;
/// mismatched grids are an invalid comparison, not distance infinity.
///
/// This same-preference distance is what value iteration's stopping rule
/// and the fixed-point checks use. It is *not* contracted by the optimality
/// backup on its own: two tables can agree under every matching preference
/// yet store different vectors, and the envelope max then tells them apart
/// under other preferences. The backup's Lipschitz bound therefore takes
/// the stronger [`cross_metric_d`] on the input side:
/// `pseudo_metric_d(TQ, TQ′) ≤ γ · cross_metric_d(Q, Q′)`.
pub fn pseudo_metric_d<F: Real>(q1: &DiscreteMOQ<F>, q2: &DiscreteMOQ<F>) -> Result<F> {
    check_comparable(q1, q2)?;
    let (s_n, a_n, p_n, _) = q1.values.dim();
    let mut sup = F::zero();
    for s in 0..s_n {
        for a in 0..a_n {
            for p in 0..p_n {
                let w = q1.prefs[p].weights();
                let x = q1.values.slice(ndarray::s![s, a, p, ..]);
                let y = q2.values.slice(ndarray::s![s, a, p, ..]);
                let mut gap = F::zero();
                for (k, w_k) in w.iter().enumerate() {
                    gap += *w_k * (x[k] - y[k]);
                }
                sup = sup.max(gap.abs());
            }
        }
    }
    Ok(sup)
}

/// Largest scalarized disagreement sup |ω⊺(Q − Q′)| with every entry
/// measured under every grid preference, not only its own.
///
/// Dominates [`pseudo_metric_d`] (it maximizes over a superset of pairs)
/// and is the input distance the optimality backup shrinks: the backup's
/// output entry at (s, a, ω) averages envelope maxima of ω-utilities, and
/// a difference of maxima is bounded by the largest ω-measured difference
/// over all entries — whatever preference each entry is stored under.
pub fn cross_metric_d<F: Real>(q1: &DiscreteMOQ<F>, q2: &DiscreteMOQ<F>) -> Result<F> {
    check_comparable(q1, q2)?;
    let (s_n, a_n, p_n, m) = q1.values.dim();
    let mut sup = F::zero();
    let mut delta = vec![F::zero(); m];
    for s in 0..s_n {
        for a in 0..a_n {
            for p in 0..p_n {
                let x = q1.values.slice(ndarray::s![s, a, p, ..]);
                let y = q2.values.slice(ndarray::s![s, a, p, ..]);
                for k in 0..m {
                    delta[k] = x[k] - y[k];
                }
                for measure in &q1.prefs {
                    let mut gap = F::zero();
                    for (k, w_k) in measure.weights().iter().enumerate() {
                        gap += *w_k * delta[k];
                    }
                    sup = sup.max(gap.abs());
                }
            }
        }
    }
    Ok(sup)
}
