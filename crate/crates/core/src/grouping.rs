//! Greedy search over successive decoding groups.
//!
//! Starting with every sub-message in the first group, the weaker
//! sub-message of the worst device is pushed one group later (two when its
//! sibling already sits in the next group) until it reaches the last group
//! or the move budget `K I (L - 1)` is spent.

use crate::error::{validation, Result};
use crate::rates::{GroupPartition, RateModel, SolutionState, SubMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupingReturn {
    /// The iterate before the stopping one, as in the textbook algorithm.
    Penultimate,
    /// The iterate with the largest min-rate (earliest on ties).
    BestSoFar,
}

#[derive(Debug, Clone)]
pub struct GroupingResult {
    pub partition: GroupPartition,
    /// Min-rate of every visited partition, starting with the initial one.
    pub trace: Vec<f64>,
    pub moves: usize,
    /// Min-rate of the returned partition.
    pub objective: f64,
}

/// Index of the sub-message that the next step would move, with the
/// worst-device / weaker-sub-message tie rules (lowest index wins).
pub fn weakest(sub_rates: &[f64], sub_messages: usize) -> SubMessage {
    let mut best_k = 0;
    let mut best_r = f64::INFINITY;
    for (k, c) in sub_rates.chunks(sub_messages).enumerate() {
        let r: f64 = c.iter().sum();
        if r < best_r {
            best_r = r;
            best_k = k;
        }
    }
    let c = &sub_rates[best_k * sub_messages..(best_k + 1) * sub_messages];
    let mut best_i = 0;
    for i in 1..sub_messages {
        if c[i] < c[best_i] {
            best_i = i;
        }
    }
    SubMessage::new(best_k, best_i)
}

/// Group that `s` moves to, or `None` when the search stops.
pub fn next_group(partition: &GroupPartition, s: SubMessage, sub_messages: usize) -> Option<usize> {
    let l = partition.group_of(s)?;
    if l + 1 >= partition.len() {
        return None;
    }
    let blocked = s.sibling(sub_messages).is_some_and(|sib| partition.groups()[l + 1].contains(&sib));
    if !blocked {
        Some(l + 1)
    } else if l + 2 < partition.len() {
        Some(l + 2)
    } else {
        None
    }
}

pub fn greedy_group(
    model: &RateModel,
    state: &SolutionState,
    groups: usize,
    mode: GroupingReturn,
) -> Result<GroupingResult> {
    let k = model.devices();
    let i = state.sub_messages;
    if groups == 0 || groups > k * i {
        return validation(format!("L_groups must lie in [1, K*I = {}] (got {groups})", k * i));
    }
    let t_max = k * i * (groups - 1);
    let mut trial = state.clone();
    trial.partition = GroupPartition::all_in_first(k, i, groups);
    let mut history = vec![trial.partition.clone()];
    let mut trace = Vec::new();
    let mut t = 0;
    loop {
        let sub = model.sub_rates(&trial)?;
        trace.push(crate::rates::min_of(&crate::rates::sum_per_device(&sub, i)));
        let s = weakest(&sub, i);
        let Some(target) = next_group(&trial.partition, s, i) else { break };
        trial.partition.move_to(s, target);
        history.push(trial.partition.clone());
        t += 1;
        if t > t_max {
            break;
        }
    }
    // `trace` lacks the value of a partition created by the final move when
    // the budget ran out; evaluate it for completeness.
    if trace.len() < history.len() {
        let sub = model.sub_rates(&trial)?;
        trace.push(crate::rates::min_of(&crate::rates::sum_per_device(&sub, i)));
    }
    let pick = match mode {
        GroupingReturn::Penultimate => t.saturating_sub(1),
        GroupingReturn::BestSoFar => {
            let mut best = 0;
            for (j, v) in trace.iter().enumerate() {
                if *v > trace[best] {
                    best = j;
                }
            }
            best
        }
    };
    Ok(GroupingResult { partition: history[pick].clone(), objective: trace[pick], trace, moves: t })
}
