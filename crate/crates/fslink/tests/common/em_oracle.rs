//! Independent EM references: a per-pair EM that never compresses to
//! pattern counts, and a brute-force lattice search of the binary-field
//! likelihood.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub lambda: f64,
    pub m: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

fn clamp_row(row: &mut [f64]) {
    for x in row.iter_mut() {
        *x = x.clamp(FLOOR, 1.0 - FLOOR);
    }
    let s: f64 = row.iter().sum();
    for x in row.iter_mut() {
        *x /= s;
    }
}

fn pair_ll(pairs: &[Vec<Option<usize>>], lambda: f64, m: &[Vec<f64>], u: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for p in pairs {
        let mut pm = lambda;
        let mut pu = 1.0 - lambda;
        for (k, l) in p.iter().enumerate() {
            if let Some(l) = l {
                pm *= m[k][*l];
                pu *= u[k][*l];
            }
        }
        total += (pm + pu).ln();
    }
    total
}

/// EM over an explicit list of pair patterns (`None` = missing), using the
/// documented start, clamp, stopping and relabelling rules.
pub fn em_per_pair(pairs: &[Vec<Option<usize>>], levels: &[usize], tol: f64, max_iter: usize) -> Fit {
    let k = levels.len();
    // start
    let mut u: Vec<Vec<f64>> = levels.iter().map(|&l| vec![0.0; l]).collect();
    for p in pairs {
        for (f, l) in p.iter().enumerate() {
            if let Some(l) = l {
                u[f][*l] += 1.0;
            }
        }
    }
    let observed: Vec<bool> = u.iter().map(|r| r.iter().sum::<f64>() > 0.0).collect();
    for row in u.iter_mut() {
        let s: f64 = row.iter().sum();
        let n = row.len() as f64;
        for x in row.iter_mut() {
            *x = if s > 0.0 { *x / s } else { 1.0 / n };
        }
        clamp_row(row);
    }
    let mut m: Vec<Vec<f64>> = levels
        .iter()
        .map(|&l| {
            let mut r = vec![0.2 / (l - 1) as f64; l];
            r[l - 1] = 0.8;
            r
        })
        .collect();
    let mut lambda: f64 = 0.1;
    let mut trace = vec![pair_ll(pairs, lambda, &m, &u)];
    let mut iterations = 0;
    while iterations < max_iter {
        let mut wm_sum = 0.0;
        let mut mn: Vec<Vec<f64>> = levels.iter().map(|&l| vec![0.0; l]).collect();
        let mut un = mn.clone();
        for p in pairs {
            let mut pm = lambda.ln();
            let mut pu = (1.0 - lambda).ln();
            for (f, l) in p.iter().enumerate() {
                if let Some(l) = l {
                    pm += m[f][*l].ln();
                    pu += u[f][*l].ln();
                }
            }
            let xi = 1.0 / (1.0 + (pu - pm).exp());
            wm_sum += xi;
            for (f, l) in p.iter().enumerate() {
                if let Some(l) = l {
                    mn[f][*l] += xi;
                    un[f][*l] += 1.0 - xi;
                }
            }
        }
        let new_lambda = (wm_sum / pairs.len() as f64).clamp(FLOOR, 1.0 - FLOOR);
        let fix = |num: Vec<Vec<f64>>, old: &[Vec<f64>]| -> Vec<Vec<f64>> {
            num.into_iter()
                .zip(old)
                .map(|(mut r, o)| {
                    let s: f64 = r.iter().sum();
                    if s > 0.0 {
                        r.iter_mut().for_each(|x| *x /= s);
                        clamp_row(&mut r);
                        r
                    } else {
                        o.clone()
                    }
                })
                .collect()
        };
        let new_m = fix(mn, &m);
        let new_u = fix(un, &u);
        let mut delta = (new_lambda - lambda).abs();
        for f in 0..k {
            for l in 0..levels[f] {
                delta = delta.max((new_m[f][l] - m[f][l]).abs()).max((new_u[f][l] - u[f][l]).abs());
            }
        }
        lambda = new_lambda;
        m = new_m;
        u = new_u;
        iterations += 1;
        trace.push(pair_ll(pairs, lambda, &m, &u));
        if delta < tol {
            break;
        }
    }
    // relabel
    let mean = |d: &[Vec<f64>]| {
        let mut s = 0.0;
        let mut n = 0.0;
        for (f, row) in d.iter().enumerate() {
            if observed[f] {
                let top = (row.len() - 1) as f64;
                s += row.iter().enumerate().map(|(l, p)| p * l as f64 / top).sum::<f64>();
                n += 1.0;
            }
        }
        if n > 0.0 {
            s / n
        } else {
            0.0
        }
    };
    let same = (0..k)
        .filter(|&f| observed[f])
        .all(|f| m[f].iter().zip(&u[f]).all(|(a, b)| (a - b).abs() < 1e-9));
    if same {
        lambda = if mean(&m) >= 0.5 { 1.0 - FLOOR } else { FLOOR };
    } else if mean(&m) < mean(&u) {
        std::mem::swap(&mut m, &mut u);
        lambda = 1.0 - lambda;
    }
    Fit {
        lambda,
        m,
        u,
        iterations,
        trace,
    }
}

/// Binary-field instance: `counts[code]` where bit `f` of `code` is field
/// `f` agreeing.
#[derive(Debug, Clone)]
pub struct BinaryInstance {
    pub fields: usize,
    pub counts: Vec<u64>,
    pub truth: (f64, Vec<f64>, Vec<f64>),
}

/// Draws `n` pairs from a two-class model with agreement probabilities
/// `m_f` (matches) and `u_f` (non-matches).
pub fn draw_instance(rng: &mut ChaCha8Rng, fields: usize, n: usize) -> BinaryInstance {
    let lambda = rng.random_range(0.2..0.5);
    let m: Vec<f64> = (0..fields).map(|_| rng.random_range(0.8..0.95)).collect();
    let u: Vec<f64> = (0..fields).map(|_| rng.random_range(0.05..0.25)).collect();
    let mut counts = vec![0u64; 1 << fields];
    for _ in 0..n {
        let is_match = rng.random_bool(lambda);
        let mut code = 0;
        for f in 0..fields {
            let p = if is_match { m[f] } else { u[f] };
            if rng.random_bool(p) {
                code |= 1 << f;
            }
        }
        counts[code] += 1;
    }
    BinaryInstance {
        fields,
        counts,
        truth: (lambda, m, u),
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `theta = [lambda, m_1..m_F, u_1..u_F]`, each the probability of agreement.
pub fn binary_ll(counts: &[u64], fields: usize, theta: &[f64]) -> f64 {
    let lambda = theta[0];
    let mut total = 0.0;
    for (code, &n) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let mut pm = lambda;
        let mut pu = 1.0 - lambda;
        for f in 0..fields {
            let agree = code >> f & 1 == 1;
            let (mf, uf) = (theta[1 + f], theta[1 + fields + f]);
            pm *= if agree { mf } else { 1.0 - mf };
            pu *= if agree { uf } else { 1.0 - uf };
        }
        total += n as f64 * (pm + pu).ln();
    }
    total
}

pub const GRID: i32 = 1000;

fn to_theta(g: &[i32]) -> Vec<f64> {
    g.iter().map(|&k| k as f64 / GRID as f64).collect()
}

/// Best point of the lattice `{0.001, 0.002, ..., 0.999}^(2F+1)`.
///
/// Exhaustive enumeration is out of reach for seven dimensions, so this
/// does an exhaustive one-dimensional scan of every coordinate in turn and,
/// once that stalls, a line search along every direction in `{-1,0,1}^d`
/// from the incumbent, and finally an exhaustive scan of the radius-2 box
/// around it. It repeats from several starts and keeps the best point. The
/// result is a lattice point that no coordinate scan, diagonal move or
/// nearby lattice point improves on.
pub fn lattice_search(counts: &[u64], fields: usize, starts: usize, seed: u64) -> (Vec<f64>, f64) {
    let d = 2 * fields + 1;
    let eval = |g: &[i32]| binary_ll(counts, fields, &to_theta(g));
    let mut rng = seeded(seed);
    let mut dirs: Vec<Vec<i32>> = Vec::new();
    let total = 3usize.pow(d as u32);
    for idx in 0..total {
        let mut v = Vec::with_capacity(d);
        let mut x = idx;
        for _ in 0..d {
            v.push((x % 3) as i32 - 1);
            x /= 3;
        }
        if v.iter().any(|&s| s != 0) {
            dirs.push(v);
        }
    }
    let mut best_g: Vec<i32> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for s in 0..starts {
        let mut g: Vec<i32> = if s == 0 {
            let mut g = vec![100];
            g.extend(std::iter::repeat_n(850, fields));
            g.extend(std::iter::repeat_n(150, fields));
            g
        } else {
            (0..d).map(|_| rng.random_range(1..GRID)).collect()
        };
        let mut cur = eval(&g);
        loop {
            let mut improved = false;
            // Full scan of each coordinate.
            for c in 0..d {
                let keep = g[c];
                let mut arg = keep;
                for k in 1..GRID {
                    g[c] = k;
                    let v = eval(&g);
                    if v > cur {
                        cur = v;
                        arg = k;
                        improved = true;
                    }
                }
                g[c] = arg;
            }
            if improved {
                continue;
            }
            // Line search along every diagonal direction.
            for dir in &dirs {
                let mut step = 1;
                let mut moved = false;
                loop {
                    let cand: Vec<i32> = g.iter().zip(dir).map(|(a, b)| a + b * step).collect();
                    if cand.iter().any(|&k| !(1..GRID).contains(&k)) {
                        break;
                    }
                    let v = eval(&cand);
                    if v > cur {
                        cur = v;
                        g = cand;
                        moved = true;
                        step = 1;
                    } else if step < 64 {
                        step *= 2;
                    } else {
                        break;
                    }
                }
                improved |= moved;
            }
            if improved {
                continue;
            }
            // Exhaustive box of radius 2 around the incumbent.
            let w = 5usize;
            for idx in 0..w.pow(d as u32) {
                let mut x = idx;
                let cand: Vec<i32> = g
                    .iter()
                    .map(|&a| {
                        let k = a + (x % w) as i32 - 2;
                        x /= w;
                        k
                    })
                    .collect();
                if cand.iter().any(|&k| !(1..GRID).contains(&k)) {
                    continue;
                }
                let v = eval(&cand);
                if v > cur {
                    cur = v;
                    g = cand;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        if cur > best {
            best = cur;
            best_g = g;
        }
    }
    (to_theta(&best_g), best)
}

/// Max-norm distance between two binary parameter vectors, allowing the
/// two classes to be labelled either way round.
pub fn label_free_distance(x: &[f64], y: &[f64], fields: usize) -> f64 {
    let direct = x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut swapped = vec![1.0 - y[0]];
    swapped.extend_from_slice(&y[1 + fields..]);
    swapped.extend_from_slice(&y[1..1 + fields]);
    let cross = x.iter().zip(&swapped).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    direct.min(cross)
}
