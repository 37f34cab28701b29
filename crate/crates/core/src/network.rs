//! DC susceptance network over the line list.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Per-unit series susceptance `Z_base / (x · L)` of each line, in input order.
pub fn line_susceptances(s: &Scenario) -> Vec<f64> {
    s.lines
        .iter()
        .map(|l| {
            let kv = s.bus_kv(l.from_bus);
            let z_base = kv * kv / s.system.s_base_mva;
            z_base / (s.line_reactance(l) * l.length_km)
        })
        .collect()
}

/// Weighted Laplacian `B` with `B[i][j] = -b_ij` and zero row sums.
/// Indices are zero-based bus positions (bus id minus one).
pub fn build_network(s: &Scenario) -> Result<DMatrix<f64>> {
    let comps = components(s);
    if comps.len() > 1 {
        return Err(Error::Disconnected(comps));
    }
    let n = s.n_buses();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for (l, bij) in s.lines.iter().zip(line_susceptances(s)) {
        let (i, j) = (l.from_bus - 1, l.to_bus - 1);
        b[(i, j)] -= bij;
        b[(j, i)] -= bij;
        b[(i, i)] += bij;
        b[(j, j)] += bij;
    }
    Ok(b)
}

/// Connected components of the line graph as sorted lists of bus ids,
/// ordered by smallest member.
pub fn components(s: &Scenario) -> Vec<Vec<usize>> {
    let n = s.n_buses();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for l in &s.lines {
        let (a, b) = (l.from_bus.wrapping_sub(1), l.to_bus.wrapping_sub(1));
        if a >= n || b >= n {
            continue;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of_group: Vec<usize> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_of_group.iter().position(|&g| g == r) {
            Some(k) => groups[k].push(i + 1),
            None => {
                root_of_group.push(r);
                groups.push(vec![i + 1]);
            }
        }
    }
    groups
}
