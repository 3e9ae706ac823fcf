//! Number formatting and per-run CSV emission.

use std::io::Write;

use crate::error::{Error, Result};
use crate::wma::DayRecord;

/// Rounds to 12 significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Shortest decimal that reads back as the 12-significant-digit rounding.
pub fn fmt_num(v: f64) -> String {
    let r = round_sig(v);
    if r == 0.0 {
        // drops the sign of -0
        return "0".into();
    }
    r.to_string()
}

/// Writes one row per slot; the per-user column groups follow the shared
/// columns.
pub struct RunWriter<W: Write> {
    w: csv::Writer<W>,
    users: usize,
    bound: f64,
}

impl<W: Write> RunWriter<W> {
    pub fn new(out: W, users: usize, bound: f64) -> Result<Self> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "day",
            "slot",
            "market_state",
            "beta",
            "alpha_bar",
            "alpha",
            "base_power",
            "renewable",
            "deficit",
            "cost",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for field in ["price", "planned", "realized", "utility", "queue"] {
            header.extend((0..users).map(|n| format!("{field}_{n}")));
        }
        header.push("total_queue".into());
        header.push("bound".into());
        w.write_record(&header)?;
        Ok(Self { w, users, bound })
    }

    /// Also re-checks the queue bound on every emitted slot.
    pub fn write_day(&mut self, r: &DayRecord) -> Result<()> {
        for s in &r.slots {
            let total: f64 = s.queues.iter().sum();
            if total > self.bound * (1.0 + 1e-12) {
                return Err(Error::InvariantViolation {
                    day: r.day,
                    slot: s.slot,
                    detail: format!("emitted total queue {total} exceeds bound {}", self.bound),
                });
            }
            let mut row = vec![r.day.to_string(), s.slot.to_string(), r.market_state.to_string()];
            row.extend(
                [s.beta, s.alpha_bar, s.alpha, s.base_power, s.renewable, s.deficit, s.cost]
                    .into_iter()
                    .map(fmt_num),
            );
            for col in [&s.prices, &s.planned, &s.realized, &s.utility, &s.queues] {
                debug_assert_eq!(col.len(), self.users);
                row.extend(col.iter().map(|&v| fmt_num(v)));
            }
            row.push(fmt_num(total));
            row.push(fmt_num(self.bound));
            self.w.write_record(&row)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.w.flush()?;
        self.w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(3.0), "3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.0 / 3.0 * 1e6), "666666.666667");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(123456789012345.0), "123456789012000");
        assert_eq!(round_sig(round_sig(std::f64::consts::PI)), round_sig(std::f64::consts::PI));
    }
}
