use super::loss::order_losses;
use super::params::OptimState;
use crate::error::Result;
use crate::tensorgrad::Tensor;

/// All orderings of `items` in lexicographic order.
pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    let mut sorted = items.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(sorted.len());
    let mut used = vec![false; sorted.len()];
    fn rec(s: &[usize], used: &mut [bool], cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == s.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..s.len() {
            if !used[i] {
                used[i] = true;
                cur.push(s[i]);
                rec(s, used, cur, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(&sorted, &mut used, &mut cur, &mut out);
    out
}

/// Keeps `current` if it ties the minimum, otherwise the lexicographically
/// smallest minimizer.
fn pick(current: &[usize], candidates: &[Vec<usize>], losses: &[f64]) -> Vec<usize> {
    let best = losses.iter().copied().fold(f64::INFINITY, f64::min);
    if let Some(i) = candidates.iter().position(|c| c == current) {
        if losses[i] <= best {
            return current.to_vec();
        }
    }
    candidates
        .iter()
        .zip(losses)
        .filter(|(_, &l)| l <= best)
        .map(|(c, _)| c)
        .min()
        .expect("candidates nonempty")
        .clone()
}

/// Largest foreground count searched exhaustively.
pub const EXHAUSTIVE_MAX: usize = 4;

/// Order minimizing the forward loss on `frames`: every permutation for up
/// to four foreground sprites, adjacent-swap hill climbing beyond.
pub fn search_order(
    state: &OptimState,
    textures: &[&Tensor<f32>],
    targets: &[Tensor<f32>],
    frames: &[usize],
) -> Result<Vec<usize>> {
    let current = state.order.clone();
    if current.len() < 2 {
        return Ok(current);
    }
    if current.len() <= EXHAUSTIVE_MAX {
        let cands = permutations(&current);
        let losses = order_losses(state, textures, targets, frames, &cands)?;
        return Ok(pick(&current, &cands, &losses));
    }
    let mut order = current;
    let mut loss = order_losses(
        state,
        textures,
        targets,
        frames,
        std::slice::from_ref(&order),
    )?[0];
    loop {
        let cands: Vec<Vec<usize>> = (0..order.len() - 1)
            .map(|i| {
                let mut c = order.clone();
                c.swap(i, i + 1);
                c
            })
            .collect();
        let losses = order_losses(state, textures, targets, frames, &cands)?;
        let best = losses.iter().copied().fold(f64::INFINITY, f64::min);
        if best >= loss {
            return Ok(order);
        }
        order = pick(&order, &cands, &losses);
        loss = best;
    }
}

/// `count` frames spread evenly over `0..total`, each the middle of its
/// stratum.
pub fn stratified_frames(total: usize, count: usize) -> Vec<usize> {
    if count >= total {
        return (0..total).collect();
    }
    (0..count)
        .map(|i| ((2 * i + 1) * total) / (2 * count))
        .collect()
}
