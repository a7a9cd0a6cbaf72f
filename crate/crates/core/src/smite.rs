//! Greedy in-context example selection by minimizing individual and total
//! error against a batch's proxy set.
//!
//! Every test position starts a core set at its rank-2 neighbor (rank 1 is
//! the position's proxy). Each iteration scores every core set alone (the
//! individual errors) and their union (the total error), keeps the union
//! achieving the strictly lowest total so far, and grows the worst-scoring
//! unfrozen core set by its next admissible support rank. Ranks whose ids
//! sit in the proxy set are skipped so the candidate examples always come
//! from the proxy-disjoint pool; a position with no admissible rank left
//! freezes. The loop runs a fixed number of iterations or until everything
//! is frozen, and returns the best union seen.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, RecordId};
use crate::error::{Error, Result};
use crate::metrics;
use crate::predictor::Engine;
use crate::selection::BatchContext;

#[derive(Debug, Clone, Copy)]
pub struct SmiteParams {
    pub alpha: f64,
    pub rho: f64,
    /// Iteration budget for the selection loop.
    pub iterations: usize,
}

/// Per-position expansion frontier over the support ranks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreSetState {
    support_ranks: Vec<Vec<RecordId>>,
    proxy_ids: BTreeSet<RecordId>,
    /// Rank of the last consumed support entry per position (1-based).
    last_ranks: Vec<usize>,
    frozen: Vec<bool>,
    cores: Vec<Vec<RecordId>>,
}

impl CoreSetState {
    /// Seeds every position's core set with its first admissible rank at or
    /// after rank 2. A position whose every remaining rank is a proxy
    /// member freezes immediately with an empty core set.
    pub fn init(ctx: &BatchContext) -> Result<CoreSetState> {
        for support in &ctx.support {
            if support.ranked_ids.len() < 2 {
                return Err(Error::Argument(format!(
                    "position {} has only {} support entries; need at least 2",
                    support.position,
                    support.ranked_ids.len()
                )));
            }
        }
        let proxy_ids = ctx.proxy_id_set();
        let mut state = CoreSetState {
            support_ranks: ctx.support.iter().map(|s| s.ranked_ids.clone()).collect(),
            proxy_ids,
            last_ranks: vec![2; ctx.support.len()],
            frozen: vec![false; ctx.support.len()],
            cores: vec![Vec::new(); ctx.support.len()],
        };
        for j in 0..state.len() {
            match state.next_admissible(j, 2) {
                Some(rank) => state.consume(j, rank),
                None => state.frozen[j] = true,
            }
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn core(&self, position: usize) -> &[RecordId] {
        &self.cores[position]
    }

    pub fn last_ranks(&self) -> &[usize] {
        &self.last_ranks
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn all_frozen(&self) -> bool {
        self.frozen.iter().all(|&f| f)
    }

    /// Deduplicated union of the core sets, ordered by (position, rank).
    pub fn union(&self) -> Vec<RecordId> {
        let mut seen = BTreeSet::new();
        let mut ids = Vec::new();
        for core in &self.cores {
            for &id in core {
                if seen.insert(id) {
                    ids.push(id);
                }
            }
        }
        ids
    }

    /// Grows `position`'s core set by its next admissible support rank,
    /// skipping proxy members and already-consumed ids; freezes the
    /// position (core set unchanged) when ranks are exhausted.
    pub fn expand(&mut self, position: usize) -> Result<()> {
        if self.frozen[position] {
            return Err(Error::Invariant(format!(
                "cannot expand frozen position {position}"
            )));
        }
        match self.next_admissible(position, self.last_ranks[position] + 1) {
            Some(rank) => self.consume(position, rank),
            None => self.frozen[position] = true,
        }
        Ok(())
    }

    fn next_admissible(&self, position: usize, from_rank: usize) -> Option<usize> {
        let ranked = &self.support_ranks[position];
        (from_rank..=ranked.len()).find(|&rank| {
            let id = ranked[rank - 1];
            !self.proxy_ids.contains(&id) && !self.cores[position].contains(&id)
        })
    }

    fn consume(&mut self, position: usize, rank: usize) {
        let id = self.support_ranks[position][rank - 1];
        self.cores[position].push(id);
        self.last_ranks[position] = rank;
    }
}

/// One recorded iteration: individual and total errors plus the frontier
/// snapshot *before* this iteration's expansion, matching what the total
/// error was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub individual: Vec<f64>,
    pub total: f64,
    pub last_ranks: Vec<usize>,
    pub frozen: Vec<bool>,
    /// Position expanded at the end of this iteration; `None` when every
    /// position was already frozen and the loop halted.
    pub expanded: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSnapshot {
    pub iteration: usize,
    pub total: f64,
    pub last_ranks: Vec<usize>,
    pub icd: Vec<RecordId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmiteTrace {
    pub iterations: Vec<IterationRecord>,
    pub best: BestSnapshot,
}

/// Runs the selection loop for one batch and returns the in-context
/// demonstration set achieving the minimum total error, with the full
/// trace for audit.
pub fn icd_select(
    ctx: &BatchContext,
    train: &Dataset,
    params: SmiteParams,
    engine: &Engine,
) -> Result<(Vec<RecordId>, SmiteTrace)> {
    if params.iterations == 0 {
        return Err(Error::Argument("iteration budget must be at least 1".into()));
    }
    let mut state = CoreSetState::init(ctx)?;
    let mut iterations = Vec::new();
    let mut best: Option<BestSnapshot> = None;

    for iteration in 1..=params.iterations {
        let mut individual = Vec::with_capacity(state.len());
        for j in 0..state.len() {
            let eval = metrics::error(
                train,
                &ctx.proxy,
                state.core(j),
                params.alpha,
                params.rho,
                engine,
            )
            .map_err(|e| e.at_iteration(iteration))?;
            individual.push(eval.e);
        }

        let union = state.union();
        let total = metrics::error(train, &ctx.proxy, &union, params.alpha, params.rho, engine)
            .map_err(|e| e.at_iteration(iteration))?
            .e;

        if best.as_ref().is_none_or(|b| total < b.total) {
            best = Some(BestSnapshot {
                iteration,
                total,
                last_ranks: state.last_ranks().to_vec(),
                icd: union,
            });
        }

        let expanded = argmax_unfrozen(&individual, state.frozen());
        iterations.push(IterationRecord {
            iteration,
            individual,
            total,
            last_ranks: state.last_ranks().to_vec(),
            frozen: state.frozen().to_vec(),
            expanded,
        });

        match expanded {
            Some(idx) => state.expand(idx)?,
            None => break,
        }
    }

    let best = best.expect("at least one iteration ran");
    debug_assert!(best
        .icd
        .iter()
        .all(|id| !ctx.proxy_id_set().contains(id)));
    let icd = best.icd.clone();
    Ok((icd, SmiteTrace { iterations, best }))
}

/// Largest individual error among unfrozen positions, smallest index on
/// ties; `None` when every position is frozen.
fn argmax_unfrozen(individual: &[f64], frozen: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &value) in individual.iter().enumerate() {
        if frozen[j] {
            continue;
        }
        match best {
            Some(b) if individual[b] >= value => {}
            _ => best = Some(j),
        }
    }
    best
}
