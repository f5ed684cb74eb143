//! Gated one-to-one assignment shared by sensor fusion and track association.

/// Largest side for which the exact search is used; larger problems fall
/// back to greedy nearest pairing.
const EXACT_LIMIT: usize = 7;

/// Pairs rows with columns. Only pairs with `cost(r, c) <= gate` are
/// feasible. Among assignments with the most pairs, returns the one with the
/// smallest total cost (exact for small inputs, greedy otherwise). Output is
/// sorted by row.
pub fn gated_assignment(
    rows: usize,
    cols: usize,
    gate: f64,
    cost: impl Fn(usize, usize) -> f64,
) -> Vec<(usize, usize)> {
    let table: Vec<Vec<Option<f64>>> = (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| {
                    let d = cost(r, c);
                    (d <= gate).then_some(d)
                })
                .collect()
        })
        .collect();
    if rows.min(cols) <= EXACT_LIMIT && rows.max(cols) <= 2 * EXACT_LIMIT {
        exact(&table, cols)
    } else {
        greedy(&table)
    }
}

fn greedy(table: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = table
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().enumerate().filter_map(move |(c, d)| d.map(|d| (d, r, c))))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_r = vec![false; table.len()];
    let mut used_c = vec![false; table.first().map_or(0, Vec::len)];
    let mut out = Vec::new();
    for (_, r, c) in pairs {
        if !used_r[r] && !used_c[c] {
            used_r[r] = true;
            used_c[c] = true;
            out.push((r, c));
        }
    }
    out.sort_unstable();
    out
}

struct Search<'a> {
    table: &'a [Vec<Option<f64>>],
    used: Vec<bool>,
    current: Vec<(usize, usize)>,
    cost: f64,
    best: Vec<(usize, usize)>,
    best_cost: f64,
}

impl Search<'_> {
    fn better(&self) -> bool {
        self.current.len() > self.best.len()
            || (self.current.len() == self.best.len() && self.cost < self.best_cost - 1e-12)
    }

    fn run(&mut self, r: usize) {
        if r == self.table.len() {
            if self.better() {
                self.best = self.current.clone();
                self.best_cost = self.cost;
            }
            return;
        }
        for c in 0..self.used.len() {
            if let (false, Some(d)) = (self.used[c], self.table[r][c]) {
                self.used[c] = true;
                self.current.push((r, c));
                self.cost += d;
                self.run(r + 1);
                self.cost -= d;
                self.current.pop();
                self.used[c] = false;
            }
        }
        self.run(r + 1);
    }
}

fn exact(table: &[Vec<Option<f64>>], cols: usize) -> Vec<(usize, usize)> {
    let mut s = Search {
        table,
        used: vec![false; cols],
        current: Vec::new(),
        cost: 0.0,
        best: Vec::new(),
        best_cost: f64::INFINITY,
    };
    s.run(0);
    s.best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
        (a.0 - b.0).hypot(a.1 - b.1)
    }

    #[test]
    fn exact_beats_greedy_on_crossing_case() {
        // greedy takes the 1.0 pair first and is left with 10.0
        let rows = [(0.0, 0.0), (2.0, 0.0)];
        let cols = [(1.0, 0.0), (2.9, 0.0)];
        let pairs = gated_assignment(2, 2, 5.0, |r, c| dist(rows[r], cols[c]));
        let total: f64 = pairs.iter().map(|&(r, c)| dist(rows[r], cols[c])).sum();
        let alt = dist(rows[0], cols[1]) + dist(rows[1], cols[0]);
        let direct = dist(rows[0], cols[0]) + dist(rows[1], cols[1]);
        assert!((total - alt.min(direct)).abs() < 1e-12);
    }

    #[test]
    fn gate_excludes_far_pairs() {
        let pairs = gated_assignment(1, 2, 0.5, |_, c| [0.1, 0.2][c] * 10.0);
        assert!(pairs.is_empty());
    }

    #[test]
    fn prefers_more_pairs_over_lower_cost() {
        // row 0 can take either column; row 1 only column 0
        let cost = [[0.1, 0.4], [0.3, 9.0]];
        let pairs = gated_assignment(2, 2, 1.0, |r, c| cost[r][c]);
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }
}
