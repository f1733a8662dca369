//! Radial integrals over `[0, inf)` with singular heads and oscillatory tails.
//!
//! Every spectral integral in this crate has the shape
//! `int_0^inf r^p * (trigonometric polynomial in r) dr`. The head near `r = 0`
//! goes to tanh-sinh, the middle to adaptive Gauss-Kronrod on panels no
//! longer than a quarter of the fastest period, and the tail beyond the
//! switch radius is split into explicit terms `c r^p cos(w r + phi)`. Terms
//! with `w = 0` are integrated in closed form; oscillating terms are cut at
//! the zeros of the cosine and the resulting alternating series is summed
//! with van Wijngaarden's repeated averaging.

use std::f64::consts::PI;

use super::{gauss_kronrod, tanh_sinh, QuadratureResult, Tolerance};

/// `coeff * r^power * cos(omega * r + phase)`, one term of a tail expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailTerm {
    pub coeff: f64,
    pub power: f64,
    pub omega: f64,
    pub phase: f64,
}

impl TailTerm {
    /// Non-oscillating power law `coeff * r^power`.
    pub fn power(coeff: f64, power: f64) -> Self {
        Self { coeff, power, omega: 0.0, phase: 0.0 }
    }

    /// `coeff * r^power * cos(omega r)`.
    pub fn cos(coeff: f64, power: f64, omega: f64) -> Self {
        Self { coeff, power, omega, phase: 0.0 }
    }

    /// `coeff * r^power * sin(omega r)`.
    pub fn sin(coeff: f64, power: f64, omega: f64) -> Self {
        Self { coeff, power, omega, phase: -0.5 * PI }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if self.omega == 0.0 {
            self.coeff * r.powf(self.power) * self.phase.cos()
        } else {
            self.coeff * r.powf(self.power) * (self.omega * r + self.phase).cos()
        }
    }

    /// `int_{r0}^inf` of this term.
    pub fn tail_integral(&self, r0: f64, tol: Tolerance) -> QuadratureResult {
        if self.coeff == 0.0 {
            return QuadratureResult::exact(0.0);
        }
        if self.omega == 0.0 {
            assert!(self.power < -1.0, "non-oscillating tail term must decay faster than 1/r");
            let v = -self.coeff * self.phase.cos() * r0.powf(self.power + 1.0) / (self.power + 1.0);
            return QuadratureResult::exact(v);
        }
        let term = *self;
        alternating_tail(move |r| term.eval(r), self.omega, self.phase, r0, tol)
    }
}

const VW_TERMS: usize = 40;

/// `int_{r0}^inf g(r) dr` where the sign of `g` follows `cos(omega r + phase)`
/// with a smoothly decaying envelope.
pub fn alternating_tail<F: Fn(f64) -> f64>(
    g: F,
    omega: f64,
    phase: f64,
    r0: f64,
    tol: Tolerance,
) -> QuadratureResult {
    let omega_abs = omega.abs();
    let (omega, phase) = if omega < 0.0 { (-omega, -phase) } else { (omega, phase) };
    debug_assert!(omega_abs > 0.0);
    // zeros of cos(omega r + phase): omega r + phase = pi/2 + k pi
    let k0 = ((omega * r0 + phase - 0.5 * PI) / PI).ceil();
    let zero = |k: f64| (0.5 * PI + k * PI - phase) / omega;
    let mut first_zero = zero(k0);
    if first_zero <= r0 {
        first_zero = zero(k0 + 1.0);
    }
    let piece_tol = Tolerance { abs: tol.abs / 4.0, rel: tol.rel / 4.0, ..tol };
    let mut out = if first_zero > r0 {
        gauss_kronrod::integrate(&g, r0, first_zero, piece_tol)
    } else {
        QuadratureResult::zero()
    };
    let half_period = PI / omega;
    let mut partial = Vec::with_capacity(VW_TERMS);
    let mut running = 0.0;
    let mut err_acc = 0.0;
    let mut evals = 0;
    let mut a = first_zero;
    for _ in 0..VW_TERMS {
        let b = a + half_period;
        let r = gauss_kronrod::integrate(&g, a, b, piece_tol);
        running += r.value;
        err_acc += r.abs_error;
        evals += r.evaluations;
        partial.push(running);
        a = b;
    }
    let (sum, accel_err) = van_wijngaarden(&partial);
    out.value += sum;
    out.abs_error += accel_err + err_acc;
    out.evaluations += evals;
    out.converged = out.converged && accel_err <= tol.target(out.value).max(1e-300) * 10.0;
    out
}

/// Repeated averaging of partial sums of an alternating series. Returns the
/// accelerated sum and an error estimate from the last two levels.
pub fn van_wijngaarden(partial: &[f64]) -> (f64, f64) {
    let n = partial.len();
    assert!(n >= 3);
    let mut row = partial.to_vec();
    let mut prev_best = row[n - 1];
    let mut best = row[n - 1];
    // Averaging removes the alternating component; stop at two thirds depth
    // where the table is still well conditioned.
    let depth = (2 * n) / 3;
    for _ in 0..depth {
        let next: Vec<f64> = row.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        prev_best = best;
        best = *next.last().unwrap();
        row = next;
    }
    let spread = row.iter().fold(0.0f64, |m, &v| m.max((v - best).abs()));
    (best, (best - prev_best).abs().max(spread))
}

/// Layout of a radial integral: tanh-sinh on `(0, head]`, Gauss-Kronrod
/// panels of width `panel` on `[head, switch]`, explicit tail terms beyond.
#[derive(Debug, Clone)]
pub struct RadialLayout {
    pub head: f64,
    pub panel: f64,
    pub switch: f64,
    pub tail: Vec<TailTerm>,
    pub tol: Tolerance,
}

/// Upper limit on panels in the middle region.
const MAX_PANELS: f64 = 400_000.0;

impl RadialLayout {
    /// Choose head, panel width and switch radius from the tail frequencies:
    /// panels resolve the fastest oscillation and the switch sits at least 50
    /// and at least 20 periods of the slowest nonzero frequency out.
    pub fn for_tail(tail: Vec<TailTerm>, tol: Tolerance) -> Self {
        let omegas: Vec<f64> = tail.iter().map(|t| t.omega.abs()).filter(|&w| w > 0.0).collect();
        let w_max = omegas.iter().cloned().fold(1.0f64, f64::max);
        let w_min = omegas.iter().cloned().fold(f64::INFINITY, f64::min);
        let panel = 0.5 * PI / w_max;
        let mut switch = 50.0f64;
        if w_min.is_finite() {
            switch = switch.max(40.0 * PI / w_min);
        }
        switch = switch.min(panel * MAX_PANELS);
        Self { head: panel.min(1.0), panel, switch, tail, tol }
    }

    pub fn with_switch(mut self, switch: f64) -> Self {
        self.switch = switch;
        self
    }

    /// Integrate `f` over `[0, inf)`. The caller guarantees that `f` equals
    /// the sum of the tail terms for `r >= switch`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> QuadratureResult {
        debug_assert!(self.tail_matches(&f), "tail expansion does not reproduce the integrand");
        let head = tanh_sinh::integrate(&f, 0.0, self.head, self.tol);
        let mut breaks = Vec::new();
        let mut x = self.head;
        while x < self.switch {
            breaks.push(x);
            x += self.panel;
        }
        breaks.push(self.switch);
        let middle = if breaks.len() >= 2 {
            gauss_kronrod::integrate_with_breaks(
                &f,
                &breaks,
                Tolerance { max_panels: breaks.len() * 4 + 1000, ..self.tol },
            )
        } else {
            QuadratureResult::zero()
        };
        let mut out = head + middle;
        for term in &self.tail {
            out = out + term.tail_integral(self.switch, self.tol);
        }
        out
    }

    /// `int_a^inf f(r) dr` for `a > 0`, reusing the panel width and tail
    /// terms. Singular points inside `[a, switch]` are not expected.
    pub fn integrate_from<F: Fn(f64) -> f64>(&self, f: F, a: f64) -> QuadratureResult {
        assert!(a > 0.0);
        let switch = self.switch.max(a);
        let mut breaks = vec![a];
        let mut x = a;
        while x + self.panel < switch {
            x += self.panel;
            breaks.push(x);
        }
        let mut out = if switch > a {
            breaks.push(switch);
            gauss_kronrod::integrate_with_breaks(
                &f,
                &breaks,
                Tolerance { max_panels: breaks.len() * 4 + 1000, ..self.tol },
            )
        } else {
            QuadratureResult::zero()
        };
        for term in &self.tail {
            out = out + term.tail_integral(switch, self.tol);
        }
        out
    }

    /// `int_a^b f(r) dr` on the layout's panels, `0 < a < b`.
    pub fn integrate_range<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> QuadratureResult {
        let pieces = ((b - a) / self.panel).ceil().max(1.0) as usize;
        let breaks: Vec<f64> = (0..=pieces).map(|i| a + (b - a) * i as f64 / pieces as f64).collect();
        gauss_kronrod::integrate_with_breaks(f, &breaks, Tolerance { max_panels: pieces * 4 + 1000, ..self.tol })
    }

    fn tail_matches<F: Fn(f64) -> f64>(&self, f: &F) -> bool {
        [1.0, 1.37, 2.9].iter().all(|&m| {
            let r = self.switch * m;
            let expansion: f64 = self.tail.iter().map(|t| t.eval(r)).sum();
            let direct = f(r);
            let scale = self
                .tail
                .iter()
                .map(|t| t.coeff.abs() * r.powf(t.power))
                .sum::<f64>()
                .max(direct.abs());
            (expansion - direct).abs() <= 1e-8 * scale + 1e-300
        })
    }
}

/// `int_a^inf f(r) dr` for a non-oscillating integrand, through `r = a / s`
/// and tanh-sinh on `s in (0, 1]`.
pub fn semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> QuadratureResult {
    assert!(a > 0.0);
    tanh_sinh::integrate(
        |s| {
            let r = a / s;
            f(r) * a / (s * s)
        },
        0.0,
        1.0,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_integral() {
        // int_0^inf sin(r)/r dr = pi/2
        let tail = vec![TailTerm::sin(1.0, -1.0, 1.0)];
        let layout = RadialLayout::for_tail(tail, Tolerance::new(1e-13, 1e-11));
        let r = layout.integrate(|r: f64| if r == 0.0 { 1.0 } else { r.sin() / r });
        assert!((r.value - PI / 2.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn power_tail_closed_form() {
        // int_0^inf 1/(1+r)^2 has no clean tail expansion, but r^-2 for r>=1:
        // int_0^1 1 dr + int_1^inf r^-2 dr = 2
        let layout = RadialLayout {
            head: 0.5,
            panel: 0.25,
            switch: 1.0,
            tail: vec![TailTerm::power(1.0, -2.0)],
            tol: Tolerance::default(),
        };
        let r = layout.integrate(|r: f64| if r < 1.0 { 1.0 } else { r.powi(-2) });
        assert!((r.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn slow_decay_oscillatory() {
        // int_1^inf cos(3 r) r^-0.5 dr against a reference from the
        // Fresnel-type closed form evaluated by a long direct sum.
        let t = TailTerm::cos(1.0, -0.5, 3.0);
        let accel = t.tail_integral(1.0, Tolerance::new(1e-14, 1e-12));
        let direct = gauss_kronrod::integrate_with_breaks(
            |r: f64| (3.0 * r).cos() / r.sqrt(),
            &(0..=200_000).map(|k| 1.0 + k as f64 * PI / 3.0).collect::<Vec<_>>(),
            Tolerance::new(1e-15, 1e-13),
        );
        // direct truncation error ~ amplitude at the cut / omega
        let cut = 1.0 + 200_000.0 * PI / 3.0;
        let trunc = 1.0 / cut.sqrt() / 3.0;
        assert!((accel.value - direct.value).abs() < trunc + 1e-10, "{accel:?} {direct:?}");
    }

    #[test]
    fn semi_infinite_power() {
        let r = semi_infinite(|x: f64| x.powf(-1.5), 2.0, Tolerance::default());
        assert!((r.value - 2.0 / 2f64.sqrt()).abs() < 1e-10);
    }
}
