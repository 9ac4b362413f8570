//! Element-parallel execution contract: contiguous assignment of elements
//! to workers, per-element dependency lists (face neighbors plus projector
//! overlaps), and deterministic reductions.
//!
//! Tasks receive immutable shared inputs and produce single-owner outputs
//! collected in element order, so results are independent of the worker
//! count; floating reductions go through fixed-order pairwise summation.

use crate::error::{Error, Result};
use crate::geometry::Partition;
use crate::hamiltonian::PseudoPotential;
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Element-to-worker assignment and data dependencies.
#[derive(Debug, Clone)]
pub struct WorkPlan {
    pub workers: usize,
    /// Element index -> worker index (contiguous blocks).
    pub assignment: Vec<usize>,
    /// Element index -> sorted indices of other elements whose data the
    /// element needs (face neighbors and shared projector supports).
    pub dependencies: Vec<Vec<usize>>,
}

/// Builds the work plan for a partition: contiguous block assignment plus
/// dependency lists from face adjacency and projector support overlaps.
pub fn build_workplan(
    partition: &Partition,
    pseudo: &PseudoPotential,
    workers: usize,
) -> Result<WorkPlan> {
    if workers == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    let m = partition.len();
    let workers = workers.min(m);

    let mut assignment = vec![0usize; m];
    for w in 0..workers {
        let start = w * m / workers;
        let end = (w + 1) * m / workers;
        for a in assignment.iter_mut().take(end).skip(start) {
            *a = w;
        }
    }

    let mut dependencies: Vec<Vec<usize>> = vec![Vec::new(); m];
    for face in partition.faces() {
        if !face.is_self_paired() {
            dependencies[face.elem_lo].push(face.elem_hi);
            dependencies[face.elem_hi].push(face.elem_lo);
        }
    }
    // Elements sharing the support of a projector depend on each other.
    let domain = partition.domain();
    for proj in pseudo.projectors() {
        let touched: Vec<usize> = partition
            .elements()
            .iter()
            .filter(|e| proj.overlaps_box(domain, e.lower, e.extents()))
            .map(|e| e.index)
            .collect();
        for &a in &touched {
            for &b in &touched {
                if a != b {
                    dependencies[a].push(b);
                }
            }
        }
    }
    for (k, deps) in dependencies.iter_mut().enumerate() {
        deps.sort_unstable();
        deps.dedup();
        deps.retain(|&d| d != k);
    }

    Ok(WorkPlan {
        workers,
        assignment,
        dependencies,
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "task panicked".to_string()
    }
}

/// Runs a fallible task for every element on `workers` threads with
/// contiguous block assignment, collecting outputs in element order.
/// Task failures and panics surface as errors carrying the element index;
/// the lowest failing element wins deterministically.
pub fn parallel_map<T, F>(workers: usize, count: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if workers == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    let workers = workers.min(count.max(1));
    let mut slots: Vec<Option<Result<T>>> = (0..count).map(|_| None).collect();

    std::thread::scope(|scope| {
        let mut rest = &mut slots[..];
        let mut start = 0usize;
        for w in 0..workers {
            let end = (w + 1) * count / workers;
            let (chunk, tail) = rest.split_at_mut(end - start);
            rest = tail;
            let task = &task;
            let chunk_start = start;
            scope.spawn(move || {
                for (offset, slot) in chunk.iter_mut().enumerate() {
                    let element = chunk_start + offset;
                    let outcome = catch_unwind(AssertUnwindSafe(|| task(element)))
                        .unwrap_or_else(|payload| {
                            Err(Error::ElementTask {
                                element,
                                message: panic_message(payload),
                            })
                        });
                    *slot = Some(outcome);
                }
            });
            start = end;
        }
    });

    let mut out = Vec::with_capacity(count);
    for (element, slot) in slots.into_iter().enumerate() {
        match slot.expect("every element visited") {
            Ok(v) => out.push(v),
            Err(Error::ElementTask { element, message }) => {
                return Err(Error::ElementTask { element, message })
            }
            Err(e) => {
                return Err(Error::ElementTask {
                    element,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Like [`parallel_map`], but gives each task exclusive mutable access to
/// its element's slot in `items` (per-element single-owner state such as
/// warm-start blocks).
pub fn parallel_map_mut<C, T, F>(workers: usize, items: &mut [C], task: F) -> Result<Vec<T>>
where
    C: Send,
    T: Send,
    F: Fn(usize, &mut C) -> Result<T> + Sync,
{
    if workers == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    let count = items.len();
    let workers = workers.min(count.max(1));
    let mut slots: Vec<Option<Result<T>>> = (0..count).map(|_| None).collect();

    std::thread::scope(|scope| {
        let mut rest_items = items;
        let mut rest_slots = &mut slots[..];
        let mut start = 0usize;
        for w in 0..workers {
            let end = (w + 1) * count / workers;
            let (chunk_items, tail_items) = rest_items.split_at_mut(end - start);
            let (chunk_slots, tail_slots) = rest_slots.split_at_mut(end - start);
            rest_items = tail_items;
            rest_slots = tail_slots;
            let task = &task;
            let chunk_start = start;
            scope.spawn(move || {
                for (offset, (item, slot)) in
                    chunk_items.iter_mut().zip(chunk_slots.iter_mut()).enumerate()
                {
                    let element = chunk_start + offset;
                    let outcome = catch_unwind(AssertUnwindSafe(|| task(element, item)))
                        .unwrap_or_else(|payload| {
                            Err(Error::ElementTask {
                                element,
                                message: panic_message(payload),
                            })
                        });
                    *slot = Some(outcome);
                }
            });
            start = end;
        }
    });

    let mut out = Vec::with_capacity(count);
    for (element, slot) in slots.into_iter().enumerate() {
        match slot.expect("every element visited") {
            Ok(v) => out.push(v),
            Err(Error::ElementTask { element, message }) => {
                return Err(Error::ElementTask { element, message })
            }
            Err(e) => {
                return Err(Error::ElementTask {
                    element,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Fixed-order pairwise summation; deterministic for a given slice length
/// regardless of how the inputs were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}
