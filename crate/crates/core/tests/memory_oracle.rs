use fjsync::analytics::{branch_overflow_prob, partition_memory, MemoryPlan};
use fjsync::NetworkParams;

/// `P(L > q)` for an M/M/N queue from a normalized birth-death chain cut
/// far into the tail.
fn birth_death_tail(channels: u32, psi: f64, q: u64) -> f64 {
    let cap = 5_000;
    let rho = psi * channels as f64;
    let mut w = vec![1.0f64];
    for n in 1..=cap {
        let servers = (n as u32).min(channels) as f64;
        w.push(w[n - 1] * rho / servers);
    }
    let z: f64 = w.iter().sum();
    w[(q as usize + 1)..].iter().sum::<f64>() / z
}

fn poisson_tail(rho: f64, k: u64) -> f64 {
    let mut term = (-rho).exp();
    let mut head = term;
    for n in 1..=k {
        term *= rho / n as f64;
        head += term;
    }
    (1.0 - head).max(0.0)
}

fn brute_force(channels: (u32, u32), psi: (f64, f64), rho: f64, m: u64) -> (u64, u64, u64) {
    let mut best: Option<(f64, u64, u64, u64)> = None;
    for k in 0..=m {
        for qa in 0..=(m - k) {
            let qb = m - k - qa;
            let loss = birth_death_tail(channels.0, psi.0, qa) + birth_death_tail(channels.1, psi.1, qb) + poisson_tail(rho, k);
            let better = match best {
                None => true,
                Some((l, bqa, _, bk)) => {
                    // tolerance absorbs summation-order noise between the two implementations
                    if (loss - l).abs() <= 1e-13 * l.max(1e-300) {
                        (k, qa) > (bk, bqa)
                    } else {
                        loss < l
                    }
                }
            };
            if better {
                best = Some((loss, qa, qb, k));
            }
        }
    }
    let (_, qa, qb, k) = best.unwrap();
    (qa, qb, k)
}

#[test]
fn overflow_tail_matches_birth_death_chain() {
    for &(n, psi, q) in &[(3u32, 0.5, 10u64), (1, 0.375, 4), (8, 0.83, 30), (2, 0.9, 0)] {
        let got = branch_overflow_prob(n, psi, q).unwrap();
        let want = birth_death_tail(n, psi, q);
        assert!((got - want).abs() <= 1e-12 * want.max(1e-300) + 1e-15, "{n} {psi} {q}: {got} vs {want}");
    }
}

#[test]
fn partition_matches_brute_force() {
    let cases = [((1, 1), (0.375, 0.375), 0.55), ((3, 5), (0.6, 0.3), 2.0), ((8, 8), (0.5, 0.5), 4.0)];
    for (channels, psi, rho) in cases {
        let p = NetworkParams::from_loads(0.3, channels.0, psi.0, channels.1, psi.1).unwrap();
        for m in [0u64, 1, 5, 17, 30, 60] {
            let MemoryPlan { q_a_max, q_b_max, k_max, total, .. } = partition_memory(&p, rho, m).unwrap();
            assert_eq!(total, m);
            assert_eq!((q_a_max, q_b_max, k_max), brute_force(channels, psi, rho, m), "{channels:?} {psi:?} M={m}");
        }
    }
}
