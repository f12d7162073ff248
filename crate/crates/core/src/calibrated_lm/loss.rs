use std::collections::HashMap;

use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::distance::ConfusionDistance;
use crate::confusion::{ConfusionPair, ConfusionSet, Occurrence};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamStore, Var};

/// Representations of one word occurrence: its two layer vectors and the
/// sentence vector of the utterance it appears in.
#[derive(Debug, Clone, PartialEq)]
pub struct OccurrenceRep {
    pub layers: [Array1<f64>; 2],
    pub sentence: Array1<f64>,
}

pub type RepTable = HashMap<Occurrence, OccurrenceRep>;

/// Graph handles of an [`OccurrenceRep`], each a `1 x d` row.
#[derive(Debug, Clone, Copy)]
pub struct OccurrenceVars {
    pub layers: [Var; 2],
    pub sentence: Var,
}

/// `sum_i D(h_{t1,i}, h_{t2,i}) + D(h^{x1}, h^{x2})` for one pair.
pub fn pair_term(
    g: &mut Graph,
    distance: &dyn ConfusionDistance,
    a: &OccurrenceVars,
    b: &OccurrenceVars,
    negative: Option<&OccurrenceVars>,
) -> Var {
    let mut total = distance.distance(g, a.layers[0], b.layers[0], negative.map(|n| n.layers[0]));
    let d1 = distance.distance(g, a.layers[1], b.layers[1], negative.map(|n| n.layers[1]));
    total = g.add(total, d1);
    let ds = distance.distance(g, a.sentence, b.sentence, negative.map(|n| n.sentence));
    g.add(total, ds)
}

/// Mean of [`pair_term`] over `terms`; a zero constant when empty.
pub fn confusion_loss_var(
    g: &mut Graph,
    distance: &dyn ConfusionDistance,
    terms: &[(OccurrenceVars, OccurrenceVars, Option<OccurrenceVars>)],
) -> Var {
    if terms.is_empty() {
        return g.scalar_const(0.0);
    }
    let mut acc: Option<Var> = None;
    for (a, b, n) in terms {
        let t = pair_term(g, distance, a, b, n.as_ref());
        acc = Some(match acc {
            Some(s) => g.add(s, t),
            None => t,
        });
    }
    let acc = acc.expect("non-empty");
    g.scale(acc, 1.0 / terms.len() as f64)
}

/// For every pair, an occurrence whose word differs from both of its words.
///
/// Candidates come from `pool` (the current batch); when the pool has none,
/// `fallback` is tried; when neither has one the pair gets no negative.
pub fn sample_negatives<R: Rng>(
    pairs: &[&ConfusionPair],
    pool: &[Occurrence],
    fallback: &[Occurrence],
    rng: &mut R,
) -> Vec<Option<Occurrence>> {
    pairs
        .iter()
        .map(|p| {
            let (wa, wb) = p.words();
            let ok = |o: &&Occurrence| o.word != wa && o.word != wb;
            let local: Vec<&Occurrence> = pool.iter().filter(ok).collect();
            if let Some(o) = local.choose(rng) {
                return Some((*o).clone());
            }
            let global: Vec<&Occurrence> = fallback.iter().filter(ok).collect();
            global.choose(rng).map(|o| (*o).clone())
        })
        .collect()
}

/// Distinct occurrences of a pair list, sorted.
pub fn occurrences_of(pairs: &[&ConfusionPair]) -> Vec<Occurrence> {
    let mut occ: Vec<Occurrence> = pairs.iter().flat_map(|p| [p.a().clone(), p.b().clone()]).collect();
    occ.sort();
    occ.dedup();
    occ
}

/// Confusion loss over precomputed representations.
///
/// Triplet negatives are drawn from the occurrences of `pairs` with a
/// generator seeded by `seed`.
pub fn confusion_loss(pairs: &ConfusionSet, reps: &RepTable, distance: &dyn ConfusionDistance, seed: u64) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let list: Vec<&ConfusionPair> = pairs.iter().collect();
    let negatives = if distance.needs_negative() {
        let occ = occurrences_of(&list);
        sample_negatives(&list, &occ, &[], &mut ChaCha8Rng::seed_from_u64(seed))
    } else {
        vec![None; list.len()]
    };
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let mut vars: HashMap<&Occurrence, OccurrenceVars> = HashMap::new();
    let mut lookup = |g: &mut Graph, occ: &Occurrence| -> Result<OccurrenceVars> {
        let r = reps
            .get(occ)
            .ok_or_else(|| Error::Argument(format!("no representation for occurrence {occ:?}")))?;
        let (key, _) = reps.get_key_value(occ).expect("present");
        if let Some(v) = vars.get(key) {
            return Ok(*v);
        }
        let row = |a: &Array1<f64>| a.clone().insert_axis(Axis(0));
        let v = OccurrenceVars {
            layers: [g.constant(row(&r.layers[0])), g.constant(row(&r.layers[1]))],
            sentence: g.constant(row(&r.sentence)),
        };
        vars.insert(key, v);
        Ok(v)
    };
    let mut terms = Vec::with_capacity(list.len());
    for (p, n) in list.iter().zip(&negatives) {
        let a = lookup(&mut g, p.a())?;
        let b = lookup(&mut g, p.b())?;
        let n = n.as_ref().map(|o| lookup(&mut g, o)).transpose()?;
        terms.push((a, b, n));
    }
    let loss = confusion_loss_var(&mut g, distance, &terms);
    Ok(g.scalar(loss))
}
