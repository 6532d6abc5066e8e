//! Experiment configuration, dispatch and report emission.

mod config;
mod report;
mod run;

pub use config::ExperimentConfig;
pub use report::{emit_report, format_json, to_csv, to_json, to_svg, Format};
pub use run::{fit_shell_count, parse_kind, run, DEFAULT_SEED, DEFAULT_TRIALS};

/// Environment variable consulted for the seed when neither flag nor file sets one.
pub const SEED_ENV: &str = "ALLOYSCOPE_SEED";

/// Fills the seed from `ALLOYSCOPE_SEED` if it is still unset.
pub fn seed_from_env(cfg: &mut ExperimentConfig) -> crate::Result<()> {
    if cfg.seed.is_none() {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed = v
                .trim()
                .parse()
                .map_err(|_| crate::error::Error::InvalidParameter(format!("{SEED_ENV} = '{v}' is not an integer")))?;
            cfg.seed = Some(seed);
        }
    }
    Ok(())
}

/// C-style `%.12g` formatting.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        strip_zeros(&format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip_zeros(mant), sign, exp.abs())
    }
}

fn strip_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_g_twelve() {
        assert_eq!(fmt_float(0.5), "0.5");
        assert_eq!(fmt_float(2.0 / std::f64::consts::PI), "0.636619772368");
        assert_eq!(fmt_float(1e-5), "1e-05");
        assert_eq!(fmt_float(123456789012.0), "123456789012");
        assert_eq!(fmt_float(1234567890123.0), "1.23456789012e+12");
        assert_eq!(fmt_float(-3.0), "-3");
        assert_eq!(fmt_float(0.0001234), "0.0001234");
    }
}
