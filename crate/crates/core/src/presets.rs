//! Built-in experiment configurations for the worked examples.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

const SOURCES: &[(&str, &str)] = &[
    ("ex1", include_str!("../presets/ex1.toml")),
    ("ex2", include_str!("../presets/ex2.toml")),
    ("ex2_autonomous", include_str!("../presets/ex2_autonomous.toml")),
    ("ex3", include_str!("../presets/ex3.toml")),
    ("ex3_autonomous", include_str!("../presets/ex3_autonomous.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let text = source(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?;
    ExperimentConfig::from_toml(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    #[test]
    fn all_presets_build() {
        for name in names() {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.name, name);
            let exp = cfg.build(Overrides::default()).unwrap();
            assert_eq!(exp.initial_conditions.len(), 5 - 2 * (name == "ex3_autonomous") as usize);
        }
    }

    #[test]
    fn derived_gains_match_declared_bounds() {
        let ex2 = preset("ex2").unwrap().build(Overrides::default()).unwrap();
        let g = ex2.controller.gain().unwrap();
        assert!((g.eta() - (1.0 - (-15f64).exp())).abs() < 1e-15);
        let ex3 = preset("ex3").unwrap().build(Overrides::default()).unwrap();
        let g = ex3.controller.gain().unwrap();
        let e = (-10f64).exp();
        assert!((g.gain_bound() / ((1.0 - e) / (10.0 * e)) - 1.0).abs() < 1e-12);
        let ex1 = preset("ex1").unwrap().build(Overrides::default()).unwrap();
        assert!(ex1.controller.gain().unwrap().is_singular());
    }
}
