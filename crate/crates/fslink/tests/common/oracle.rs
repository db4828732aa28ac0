//! Reference implementations used only to produce and check expected values.
//! Written directly from the textbook definitions; they share no code with
//! the library paths they check.
#![allow(dead_code)]

/// Jaro similarity, straight from the definition over byte strings.
pub fn jaro(a: &str, b: &str) -> f64 {
    let a = a.as_bytes();
    let b = b.as_bytes();
    let window = (a.len().max(b.len()) / 2) as isize - 1;
    let window = window.max(0) as usize;
    let mut taken_b = vec![false; b.len()];
    let mut hits_a = Vec::new();
    let mut flag_a = vec![false; a.len()];
    for i in 0..a.len() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !taken_b[j] && a[i] == b[j] {
                taken_b[j] = true;
                flag_a[i] = true;
                break;
            }
        }
    }
    for i in 0..a.len() {
        if flag_a[i] {
            hits_a.push(a[i]);
        }
    }
    let hits_b: Vec<u8> = (0..b.len()).filter(|&j| taken_b[j]).map(|j| b[j]).collect();
    let m = hits_a.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let half_t = hits_a.iter().zip(&hits_b).filter(|(x, y)| x != y).count() as f64 / 2.0;
    (m / a.len() as f64 + m / b.len() as f64 + (m - half_t) / m) / 3.0
}

pub fn jaro_winkler(a: &str, b: &str) -> f64 {
    let j = jaro(a, b);
    let prefix = a
        .bytes()
        .zip(b.bytes())
        .take(4)
        .take_while(|(x, y)| x == y)
        .count() as f64;
    j + prefix * 0.1 * (1.0 - j)
}
