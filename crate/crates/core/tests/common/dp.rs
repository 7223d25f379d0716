//! Brute-force dynamic program for the scalar storage instance.
//!
//! State: storage level on a 0.1 grid over [-6, 6] and remaining budget on a
//! 0.25 grid. Control: jumps in multiples of 0.25. Demand increments are
//! normal with variance dt, binned to the 0.1 grid. Off-grid levels are
//! interpolated linearly. The per-step cost matches the library's
//! discretization: trade cost at the node plus a trapezoid of the running
//! cost with the post-trade control held over the step.

pub struct DpInstance {
    pub horizon: f64,
    pub n_steps: usize,
    pub x0: f64,
    pub sigma: f64,
    pub budget: f64,
    pub weight: f64,
    pub cap: f64,
    pub trade_level: f64,
    pub trade_slope: f64,
}

const Z_STEP: f64 = 0.1;
const Z_MAX: f64 = 6.0;
const U_STEP: f64 = 0.25;

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

// Complementary error function, Numerical Recipes erfcc (|rel err| < 1.2e-7).
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

impl DpInstance {
    fn running(&self, z: f64) -> f64 {
        (self.weight * z * z).min(self.cap)
    }

    /// Minimal expected cost from the initial state.
    pub fn solve(&self) -> f64 {
        let nz = (2.0 * Z_MAX / Z_STEP).round() as usize + 1;
        let nr = (self.budget / U_STEP).round() as usize + 1;
        let dt = self.horizon / self.n_steps as f64;
        let sd = self.sigma * dt.sqrt();

        // Binned increments j * Z_STEP, tails folded into the end bins.
        let half = ((6.0 * sd / Z_STEP).ceil() as i64).max(1);
        let mut bins = Vec::new();
        for j in -half..=half {
            let lo = if j == -half { f64::NEG_INFINITY } else { (j as f64 - 0.5) * Z_STEP };
            let hi = if j == half { f64::INFINITY } else { (j as f64 + 0.5) * Z_STEP };
            let p = if sd == 0.0 {
                if lo < 0.0 && 0.0 <= hi { 1.0 } else { 0.0 }
            } else {
                normal_cdf(hi / sd) - normal_cdf(lo / sd)
            };
            bins.push((j as f64 * Z_STEP, p));
        }

        let z_of = |i: usize| -Z_MAX + i as f64 * Z_STEP;
        let interp = |v: &[f64], r: usize, z: f64| -> f64 {
            let pos = ((z.clamp(-Z_MAX, Z_MAX) + Z_MAX) / Z_STEP).min((nz - 1) as f64);
            let i = (pos.floor() as usize).min(nz - 2);
            let w = pos - i as f64;
            (1.0 - w) * v[r * nz + i] + w * v[r * nz + i + 1]
        };

        let mut next = vec![0.0; nr * nz];
        for k in (0..self.n_steps).rev() {
            let t = k as f64 * dt;
            let h = self.trade_level + self.trade_slope * t;
            let mut cur = vec![0.0; nr * nz];
            for r in 0..nr {
                for i in 0..nz {
                    let z = z_of(i);
                    let mut best = f64::INFINITY;
                    for m in 0..=r {
                        let rest = r - m;
                        let amount = m as f64 * U_STEP;
                        for sign in [1.0, -1.0] {
                            if m == 0 && sign < 0.0 {
                                continue;
                            }
                            let zp = z + sign * amount;
                            let mut c = h * amount + 0.5 * dt * self.running(zp);
                            for &(dx, p) in &bins {
                                let zn = zp + dx;
                                c += p * (0.5 * dt * self.running(zn) + interp(&next, rest, zn));
                            }
                            best = best.min(c);
                        }
                    }
                    cur[r * nz + i] = best;
                }
            }
            next = cur;
        }
        interp(&next, nr - 1, self.x0)
    }
}
