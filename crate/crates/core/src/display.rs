//! 20×4 character LCD frame.
//!
//! ```text
//! V=230.00V I=5.00A
//! P=920.00W PF=0.80L
//! Q=690.00var
//! S=1150.00VAF=50.00Hz
//! ```
//!
//! Every value carries two decimals. The space between the `S` and `F`
//! tokens is dropped when the row would otherwise exceed 20 columns.

use std::fmt;

use thiserror::Error;

use crate::metering::MeterReading;
use crate::num::Scalar;

pub const LCD_COLS: usize = 20;
pub const LCD_ROWS: usize = 4;

// slot widths, in characters
const W_VOLTS: usize = 6;
const W_AMPS: usize = 5;
const W_POWER: usize = 7;
const W_PF: usize = 4;
const W_FREQ: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DisplayError {
    #[error("value {value} does not fit a {width}-character field")]
    FieldOverflow { value: String, width: usize },
    #[error("value {0} cannot be displayed")]
    InvalidValue(String),
}

/// Two-decimal rendering, ties rounded away from zero.
pub fn format_value<T: Scalar>(x: T, width: usize) -> Result<String, DisplayError> {
    if !x.is_finite() || x < T::zero() {
        return Err(DisplayError::InvalidValue(x.to_string()));
    }
    let hundredths = (x * T::lit(100.0))
        .round()
        .to_u64()
        .ok_or_else(|| DisplayError::InvalidValue(x.to_string()))?;
    let text = format!("{}.{:02}", hundredths / 100, hundredths % 100);
    if text.len() > width {
        return Err(DisplayError::FieldOverflow { value: text, width });
    }
    Ok(text)
}

/// A full LCD frame: exactly four rows of exactly twenty characters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LcdFrame {
    rows: [String; LCD_ROWS],
}

impl LcdFrame {
    pub fn rows(&self) -> &[String; LCD_ROWS] {
        &self.rows
    }

    /// The frame boxed in `+`/`-` border lines, one row per line.
    pub fn bordered(&self) -> String {
        let rule = format!("+{}+", "-".repeat(LCD_COLS - 2));
        let mut out = String::with_capacity((LCD_COLS + 3) * (LCD_ROWS + 2));
        out.push_str(&rule);
        out.push('\n');
        for row in &self.rows {
            out.push_str(row);
            out.push('\n');
        }
        out.push_str(&rule);
        out.push('\n');
        out
    }

    /// Reads the numeric tokens back off the frame.
    pub fn parse(&self) -> Option<DisplayedValues> {
        let [r1, r2, r3, r4] = &self.rows;
        let num = |s: &str| s.parse::<f64>().ok();
        let between = |row: &str, start: &str, end: &str| -> Option<f64> {
            let from = row.find(start)? + start.len();
            let to = from + row[from..].find(end)?;
            num(&row[from..to])
        };
        let pf_start = r2.find("PF=")? + 3;
        let pf_tail = r2[pf_start..].trim_end();
        let (pf_text, suffix) = pf_tail.split_at(pf_tail.len().checked_sub(1)?);
        Some(DisplayedValues {
            vrms: between(r1, "V=", "V ")?,
            irms: between(r1, "I=", "A")?,
            p: between(r2, "P=", "W")?,
            pf: num(pf_text)?,
            lagging: match suffix {
                "L" => true,
                "C" => false,
                _ => return None,
            },
            q: between(r3, "Q=", "var")?,
            s: between(r4, "S=", "VA")?,
            freq: between(r4, "F=", "Hz")?,
        })
    }
}

impl fmt::Display for LcdFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rows {
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

/// Values as they appear on the LCD.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplayedValues {
    pub vrms: f64,
    pub irms: f64,
    pub p: f64,
    pub pf: f64,
    pub lagging: bool,
    pub q: f64,
    pub s: f64,
    pub freq: f64,
}

fn pad(row: String) -> Result<String, DisplayError> {
    if row.len() > LCD_COLS {
        return Err(DisplayError::FieldOverflow {
            value: row,
            width: LCD_COLS,
        });
    }
    Ok(format!("{row:<width$}", width = LCD_COLS))
}

/// Lays a reading out on the LCD.
pub fn render<T: Scalar>(reading: &MeterReading<T>) -> Result<LcdFrame, DisplayError> {
    let v = format_value(reading.vrms, W_VOLTS)?;
    let i = format_value(reading.irms, W_AMPS)?;
    let p = format_value(reading.p, W_POWER)?;
    let pf = format_value(reading.pf, W_PF)?;
    let q = format_value(reading.q, W_POWER)?;
    let s = format_value(reading.s, W_POWER)?;
    let f = format_value(reading.freq, W_FREQ)?;
    let kind = if reading.lagging { 'L' } else { 'C' };

    let mut last = format!("S={s}VA F={f}Hz");
    if last.len() > LCD_COLS {
        last = format!("S={s}VAF={f}Hz");
    }
    Ok(LcdFrame {
        rows: [
            pad(format!("V={v}V I={i}A"))?,
            pad(format!("P={p}W PF={pf}{kind}"))?,
            pad(format!("Q={q}var"))?,
            pad(last)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metering::compute_powers;
    use proptest::prelude::*;

    fn reading(v: f64, i: f64, theta: f64, lagging: bool) -> MeterReading<f64> {
        let mut r = compute_powers(v, i, theta, lagging);
        r.freq = 50.0;
        r
    }

    #[test]
    fn format_examples() {
        assert_eq!(format_value(230.0, 6).unwrap(), "230.00");
        assert_eq!(format_value(0.799, 4).unwrap(), "0.80");
        assert_eq!(format_value(0.0, 4).unwrap(), "0.00");
        assert_eq!(format_value(0.125, 4).unwrap(), "0.13");
        assert_eq!(format_value(9.995_f32, 5).unwrap(), "10.00");
    }

    #[test]
    fn format_errors() {
        assert!(matches!(
            format_value(1000.0, 6),
            Err(DisplayError::FieldOverflow { .. })
        ));
        assert!(matches!(
            format_value(-1.0, 6),
            Err(DisplayError::InvalidValue(_))
        ));
        assert!(matches!(
            format_value(f64::NAN, 6),
            Err(DisplayError::InvalidValue(_))
        ));
    }

    #[test]
    fn resistive_frame() {
        let frame = render(&reading(230.0, 5.0, 0.0, true)).unwrap();
        assert_eq!(frame.rows()[0], "V=230.00V I=5.00A   ");
        assert_eq!(frame.rows()[1], "P=1150.00W PF=1.00L ");
        assert_eq!(frame.rows()[2], "Q=0.00var           ");
        assert_eq!(frame.rows()[3], "S=1150.00VAF=50.00Hz");
    }

    #[test]
    fn point_eight_frame() {
        let frame = render(&reading(230.0, 5.0, 0.8_f64.acos(), true)).unwrap();
        let text = frame.to_string();
        for token in ["P=920.00W", "PF=0.80L", "Q=690.00var", "S=1150.00VA"] {
            assert!(text.contains(token), "{token} missing from\n{text}");
        }
    }

    #[test]
    fn small_apparent_power_keeps_separator() {
        let frame = render(&reading(100.0, 2.0, 0.0, false)).unwrap();
        assert_eq!(frame.rows()[3], "S=200.00VA F=50.00Hz");
        assert!(frame.rows()[1].contains("PF=1.00C"));
    }

    #[test]
    fn zero_frame() {
        let frame = render(&compute_powers(0.0, 0.0, std::f64::consts::FRAC_PI_2, true)).unwrap();
        assert_eq!(frame.rows()[0], "V=0.00V I=0.00A     ");
        assert_eq!(frame.rows()[1], "P=0.00W PF=0.00L    ");
        assert_eq!(frame.rows()[2], "Q=0.00var           ");
        assert_eq!(frame.rows()[3], "S=0.00VA F=0.00Hz   ");
    }

    #[test]
    fn bordered_output() {
        let frame = render(&reading(230.0, 5.0, 0.0, true)).unwrap();
        let text = frame.bordered();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "+------------------+");
        assert_eq!(lines[5], lines[0]);
        assert_eq!(lines[1], frame.rows()[0]);
    }

    #[test]
    fn overflow_is_reported() {
        let mut r = reading(250.0, 20.0, 0.0, true);
        r.s = 123_456.0;
        assert!(matches!(
            render(&r),
            Err(DisplayError::FieldOverflow { .. })
        ));
    }

    proptest! {
        #[test]
        fn frames_are_four_by_twenty_and_round_trip(
            v in 0.0..=250.0f64,
            i in 0.0..=20.0f64,
            theta in 0.0..=std::f64::consts::PI,
            lagging in any::<bool>(),
            freq in 0.0..=99.99f64,
        ) {
            let mut r = compute_powers(v, i, theta, lagging);
            r.freq = freq;
            let frame = render(&r).unwrap();
            for row in frame.rows() {
                prop_assert_eq!(row.len(), LCD_COLS);
                prop_assert!(row.bytes().all(|b| (0x20..0x7f).contains(&b)));
            }
            let shown = frame.parse().unwrap();
            let two = |x: f64| (x * 100.0).round() / 100.0;
            prop_assert_eq!(shown.vrms, two(r.vrms));
            prop_assert_eq!(shown.irms, two(r.irms));
            prop_assert_eq!(shown.p, two(r.p));
            prop_assert_eq!(shown.pf, two(r.pf));
            prop_assert_eq!(shown.q, two(r.q));
            prop_assert_eq!(shown.s, two(r.s));
            prop_assert_eq!(shown.freq, two(r.freq));
            prop_assert_eq!(shown.lagging, lagging);
            prop_assert_eq!(render(&r).unwrap(), frame);
        }
    }
}
