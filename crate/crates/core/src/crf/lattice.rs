//! Trellis computations over a 3-label chain: forward/backward in log
//! space and exact n-best list decoding.

use std::cmp::Ordering;

pub(crate) const L: usize = 3;

pub(crate) type Scores = [f64; L];

#[derive(Clone, Copy, Debug)]
pub(crate) struct Chain<'a> {
    pub emissions: &'a [Scores],
    pub start: &'a Scores,
    pub trans: &'a [Scores; L],
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Chain<'_> {
    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    /// Unnormalized log score of a label path.
    pub fn path_score(&self, path: &[u8]) -> f64 {
        let mut score = 0.0;
        for (t, &y) in path.iter().enumerate() {
            let y = y as usize;
            score += if t == 0 {
                self.start[y]
            } else {
                self.trans[path[t - 1] as usize][y]
            };
            score += self.emissions[t][y];
        }
        score
    }

    /// Forward log-messages and the log partition function.
    pub fn forward(&self) -> (Vec<Scores>, f64) {
        let t_len = self.len();
        if t_len == 0 {
            return (Vec::new(), 0.0);
        }
        let mut alpha = vec![[0.0; L]; t_len];
        for y in 0..L {
            alpha[0][y] = self.start[y] + self.emissions[0][y];
        }
        for t in 1..t_len {
            for y in 0..L {
                let terms: Scores = std::array::from_fn(|p| alpha[t - 1][p] + self.trans[p][y]);
                alpha[t][y] = log_sum_exp(&terms) + self.emissions[t][y];
            }
        }
        let log_z = log_sum_exp(&alpha[t_len - 1]);
        (alpha, log_z)
    }

    pub fn backward(&self) -> Vec<Scores> {
        let t_len = self.len();
        let mut beta = vec![[0.0; L]; t_len];
        for t in (0..t_len.saturating_sub(1)).rev() {
            for y in 0..L {
                let terms: Scores =
                    std::array::from_fn(|n| self.trans[y][n] + self.emissions[t + 1][n] + beta[t + 1][n]);
                beta[t][y] = log_sum_exp(&terms);
            }
        }
        beta
    }

    /// The `n` highest-scoring paths, best first. Equal scores are ordered
    /// lexicographically by label index, so the result is fully determined.
    pub fn nbest(&self, n: usize) -> Vec<(f64, Vec<u8>)> {
        assert!(n >= 1);
        let t_len = self.len();
        if t_len == 0 {
            return vec![(0.0, Vec::new())];
        }
        // cells[y]: best partial paths ending in label y at the current position.
        let mut cells: Vec<Vec<(f64, Vec<u8>)>> = (0..L)
            .map(|y| vec![(self.start[y] + self.emissions[0][y], vec![y as u8])])
            .collect();
        for t in 1..t_len {
            cells = (0..L)
                .map(|y| {
                    let mut cands: Vec<(f64, Vec<u8>)> = Vec::with_capacity(L * n);
                    for (p, cell) in cells.iter().enumerate() {
                        for (score, path) in cell {
                            let mut next = Vec::with_capacity(t + 1);
                            next.extend_from_slice(path);
                            next.push(y as u8);
                            cands.push((score + self.trans[p][y] + self.emissions[t][y], next));
                        }
                    }
                    cands.sort_by(order);
                    cands.truncate(n);
                    cands
                })
                .collect();
        }
        let mut out: Vec<(f64, Vec<u8>)> = cells.into_iter().flatten().collect();
        out.sort_by(order);
        out.truncate(n);
        out
    }
}

fn order(a: &(f64, Vec<u8>), b: &(f64, Vec<u8>)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}
