//! Finite-difference checks of tape gradients.

use crate::error::{Error, Result};
use crate::param::{Gradients, ParamId, ParamStore};
use crate::tape::{Tape, Var};

/// Which entries of each parameter to perturb.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    All,
    /// The `k` entries with the largest analytic gradient magnitude.
    Largest(usize),
}

/// Difference formula used for the numeric derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, truncation error `O(h²)`.
    #[default]
    Central,
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`, truncation error `O(h⁴)`.
    /// Allows a larger `h`, which keeps rounding noise small relative to tiny
    /// gradients of a large loss.
    FivePoint,
}

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_entry: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

/// `|a − n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn evaluate<F, E>(store: &ParamStore, f: &F) -> Result<f64, E>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Result<Var, E>,
    E: From<Error>,
{
    let mut tape = Tape::new(store);
    let loss = f(&mut tape)?;
    Ok(tape.value(loss).item()?)
}

/// Runs `f` once with backward to get analytic gradients, then compares them
/// entry by entry against central differences with step `eps`.
///
/// `f` must be deterministic; it receives an evaluation tape, so dropout is off.
/// Its error type only needs to absorb this crate's [`Error`].
pub fn finite_diff_check<F, E>(
    store: &mut ParamStore,
    f: F,
    eps: f64,
    selection: Selection,
) -> Result<GradCheckReport, E>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Result<Var, E>,
    E: From<Error>,
{
    let mut grads = Gradients::new(store);
    {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        tape.backward(loss, &mut grads)?;
    }
    check_with(store, f, &grads, eps, selection, Stencil::Central)
}

/// [`finite_diff_check`] with a chosen difference formula.
pub fn finite_diff_check_with<F, E>(
    store: &mut ParamStore,
    f: F,
    eps: f64,
    selection: Selection,
    stencil: Stencil,
) -> Result<GradCheckReport, E>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Result<Var, E>,
    E: From<Error>,
{
    let mut grads = Gradients::new(store);
    {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        tape.backward(loss, &mut grads)?;
    }
    check_with(store, f, &grads, eps, selection, stencil)
}

/// Compares externally supplied gradients against central differences.
pub fn check_against<F, E>(
    store: &mut ParamStore,
    f: F,
    analytic: &Gradients,
    eps: f64,
    selection: Selection,
) -> Result<GradCheckReport, E>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Result<Var, E>,
    E: From<Error>,
{
    check_with(store, f, analytic, eps, selection, Stencil::Central)
}

fn check_with<F, E>(
    store: &mut ParamStore,
    f: F,
    analytic: &Gradients,
    eps: f64,
    selection: Selection,
    stencil: Stencil,
) -> Result<GradCheckReport, E>
where
    F: for<'a> Fn(&mut Tape<'a>) -> Result<Var, E>,
    E: From<Error>,
{
    let ids: Vec<ParamId> = store.iter().filter(|(_, p)| !p.frozen).map(|(id, _)| id).collect();
    let mut report = GradCheckReport::default();
    for id in ids {
        let n = store.get(id).value.len();
        let grad: Vec<f64> = match analytic.get(id) {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; n],
        };
        let entries: Vec<usize> = match selection {
            Selection::All => (0..n).collect(),
            Selection::Largest(k) => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()).then(a.cmp(&b)));
                order.truncate(k);
                order
            }
        };
        let mut group = GroupReport {
            name: store.get(id).name.clone(),
            checked: entries.len(),
            max_rel_error: 0.0,
            worst_entry: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for e in entries {
            let orig = store.get(id).value.data()[e];
            let mut at = |k: f64| {
                store.get_mut(id).value.data_mut()[e] = orig + k * eps;
                evaluate(store, &f)
            };
            let numeric = match stencil {
                Stencil::Central => {
                    let (p, m) = (at(1.0), at(-1.0));
                    p.and_then(|p| Ok((p - m?) / (2.0 * eps)))
                }
                Stencil::FivePoint => {
                    let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
                    // Differences first: summing the raw values would round away
                    // the low bits of a large loss.
                    (|| Ok((8.0 * (p1? - m1?) - (p2? - m2?)) / (12.0 * eps)))()
                }
            };
            store.get_mut(id).value.data_mut()[e] = orig;
            let numeric = numeric?;
            let err = relative_error(grad[e], numeric);
            if err > group.max_rel_error || group.max_rel_error.is_nan() {
                group.max_rel_error = err;
                group.worst_entry = e;
                group.analytic = grad[e];
                group.numeric = numeric;
            }
        }
        report.groups.push(group);
    }
    Ok(report)
}
