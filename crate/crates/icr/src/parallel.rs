//! Window-parallel application of `sqrt(K_ICR)`.
//!
//! Levels run in order; the windows of one level are split into chunks that
//! rayon processes independently. Every output value comes from the same
//! arithmetic as the sequential path, so results are bit-identical for any
//! thread count.

use icr_core::{ApplyBuffers, IcrModel, LatentVector, Result};
use rayon::prelude::*;

/// Windows handed to one rayon task.
const CHUNK_WINDOWS: usize = 4096;

pub fn par_apply_sqrt(model: &IcrModel, xi: &LatentVector) -> Result<Vec<f64>> {
    let mut buffers = model.buffers();
    Ok(par_apply_sqrt_with(model, xi, &mut buffers)?.to_vec())
}

pub fn par_apply_sqrt_with<'a>(model: &IcrModel, xi: &LatentVector, buffers: &'a mut ApplyBuffers) -> Result<&'a [f64]> {
    if xi.layout() != model.latent_layout() {
        // reuse the sequential path's shape error
        return model.apply_sqrt_with(xi, buffers);
    }
    let spec = model.spec();
    let h = model.hierarchy();
    let ApplyBuffers { current, next } = buffers;
    current.resize(spec.n0, 0.0);
    model.apply_base_into(xi.base(), current);
    for level in 1..=spec.n_lvl {
        next.resize(h.size(level), 0.0);
        let coarse = &*current;
        next.par_chunks_mut(CHUNK_WINDOWS * spec.n_fsz).enumerate().for_each(|(c, out)| {
            model.refine_windows(level, coarse, xi.level(level), out, c * CHUNK_WINDOWS);
        });
        std::mem::swap(current, next);
    }
    Ok(&buffers.current[h.modeled_range()])
}

/// Runs `f` on a dedicated pool with `threads` workers; `1` stays on the
/// calling thread.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    if threads <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}

/// Sequential for one thread, window-parallel otherwise.
pub fn apply_sqrt_threads(model: &IcrModel, xi: &LatentVector, threads: usize) -> Result<Vec<f64>> {
    let mut buffers = model.buffers();
    Ok(apply_sqrt_threads_with(model, xi, threads, &mut buffers)?.to_vec())
}

pub fn apply_sqrt_threads_with<'a>(
    model: &IcrModel,
    xi: &LatentVector,
    threads: usize,
    buffers: &'a mut ApplyBuffers,
) -> Result<&'a [f64]> {
    if threads <= 1 {
        model.apply_sqrt_with(xi, buffers)
    } else {
        par_apply_sqrt_with(model, xi, buffers)
    }
}
