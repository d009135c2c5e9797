//! Reduction of the K! ordering cones to blocks of orderings sharing the
//! active index, each described by a few pairwise constraints V_a < V_b.

use std::fmt;

use crate::maxmin::{phi, MaxMinSpec, Permutation};

use super::CertifyError;

pub const MAX_K: usize = 6;
/// Above this K every ordering is its own block (full chain of K-1 pairs).
const GREEDY_K: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Block {
    pub active: usize,
    /// (a, b) means V_a < V_b; sorted.
    pub pairs: Vec<(usize, usize)>,
    /// Orderings covered by the block.
    pub orderings: Vec<Permutation>,
}

impl Block {
    pub fn pairs_label(&self) -> String {
        let items: Vec<String> = self
            .pairs
            .iter()
            .map(|(a, b)| format!("{}<{}", a + 1, b + 1))
            .collect();
        format!("({})", items.join(", "))
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "active {} pairs {}", self.active + 1, self.pairs_label())
    }
}

fn extensions(perms: &[Permutation], pos: &[Vec<usize>], pairs: &[(usize, usize)]) -> Vec<usize> {
    (0..perms.len())
        .filter(|&r| pairs.iter().all(|&(a, b)| pos[r][a] < pos[r][b]))
        .collect()
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Greedy cover of each preimage of the active-index map by sets of
/// orderings that a small set of pairwise constraints describes exactly.
pub fn reduced_blocks(spec: &MaxMinSpec) -> Result<Vec<Block>, CertifyError> {
    let k = spec.k();
    if k > MAX_K {
        return Err(CertifyError::Complexity { k });
    }
    let perms = Permutation::all(k);
    let pos: Vec<Vec<usize>> = perms
        .iter()
        .map(|p| {
            let mut v = vec![0; k];
            for (i, &x) in p.as_slice().iter().enumerate() {
                v[x] = i;
            }
            v
        })
        .collect();
    let active: Vec<usize> = perms.iter().map(|p| phi(spec, p)).collect();
    let all_pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| (0..k).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let mut blocks = Vec::new();
    for l in 0..k {
        let mut uncovered: Vec<bool> = active.iter().map(|&a| a == l).collect();
        while let Some(first) = uncovered.iter().position(|&u| u) {
            let mut best: Option<(Vec<(usize, usize)>, Vec<usize>)> = None;
            if k <= GREEDY_K {
                for size in 0..k {
                    combinations(all_pairs.len(), size, |sel| {
                        let pairs: Vec<(usize, usize)> =
                            sel.iter().map(|&i| all_pairs[i]).collect();
                        let ext = extensions(&perms, &pos, &pairs);
                        if ext.is_empty() || !ext.iter().all(|&r| uncovered[r]) {
                            return;
                        }
                        if best.as_ref().is_none_or(|b| ext.len() > b.1.len()) {
                            best = Some((pairs, ext));
                        }
                    });
                }
            }
            let (mut pairs, ext) = best.unwrap_or_else(|| {
                let p = perms[first].as_slice();
                (p.windows(2).map(|w| (w[0], w[1])).collect(), vec![first])
            });
            for &r in &ext {
                uncovered[r] = false;
            }
            pairs.sort();
            blocks.push(Block {
                active: l,
                pairs,
                orderings: ext.iter().map(|&r| perms[r].clone()).collect(),
            });
        }
    }
    Ok(blocks)
}
