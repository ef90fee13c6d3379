//! Canned study configs behind `basedb reproduce --figure ...`.
//!
//! * `fig3`: regret against the batch budget `M = 2..6` on the four-bump
//!   experiment instance at `T = 50000`, with the fully online BSE as
//!   reference. `c_batch` and `c_thresh` were fixed once by calibration.
//! * `thm4`: static binning (three `g` regimes around the plan's `g_0`)
//!   against dynamic binning at `M = 3` on the single-bump instance with
//!   `z = ceil(T^(1/4))`, `T` in `{2^13, 2^15, 2^17}`.
//! * `rates`: BaSEDB at `M = 3` on `C_z` adversaries with `z` matched to `t_1`,
//!   `T` in `{2^12, ..., 2^17}`, fitted regret slope.

use std::fmt;
use std::str::FromStr;

use crate::config::ExperimentConfig;

pub const FIG3: &str = r#"name = "fig3"
master_seed = 20240917
replications = 200
checkpoints = 64

[instance]
name = "experiment"
signs = "per_replication"

[plan]
T = 50000
M = 5
alpha = 0.2
beta = 1.0
d = 1
L = 2.0
c_batch = 1.0
c_thresh = 0.15

[sweep]
M = [2, 3, 4, 5, 6]
policy = ["basedb", "online_bse"]
"#;

pub const THM4: &str = r#"name = "thm4"
master_seed = 20240917
replications = 200
checkpoints = 64

[instance]
name = "static_failure"

[plan]
T = 131072
M = 3
alpha = 1.0
beta = 1.0
d = 1
L = 1.0
c_batch = 1.0
c_thresh = 0.15

[policy]
name = "static_se"

[sweep]
T = [8192, 32768, 131072]
g_factor = [0.5, 1.0, 2.0]
policy = ["basedb", "static_se"]
"#;

pub const RATES: &str = r#"name = "rates"
master_seed = 20240917
replications = 50
checkpoints = 64

[instance]
name = "cz"
signs = "per_replication"

[plan]
T = 4096
M = 3
alpha = 1.0
beta = 1.0
d = 1
L = 1.0

[sweep]
T = [4096, 8192, 16384, 32768, 65536, 131072]
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Fig3,
    Thm4,
    Rates,
}

impl Study {
    pub const ALL: [Study; 3] = [Study::Fig3, Study::Thm4, Study::Rates];

    pub fn config_text(self) -> &'static str {
        match self {
            Study::Fig3 => FIG3,
            Study::Thm4 => THM4,
            Study::Rates => RATES,
        }
    }

    pub fn config(self) -> ExperimentConfig {
        ExperimentConfig::from_toml(self.config_text()).expect("canned configs parse")
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Fig3 => "fig3",
            Study::Thm4 => "thm4",
            Study::Rates => "rates",
        })
    }
}

impl FromStr for Study {
    type Err = String;

    fn from_str(s: &str) -> Result<Study, String> {
        Study::ALL
            .into_iter()
            .find(|st| st.to_string() == s)
            .ok_or_else(|| format!("unknown figure `{s}`, expected fig3, thm4 or rates"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::PolicySpec;

    #[test]
    fn canned_configs_resolve() {
        for study in Study::ALL {
            let exp = study.config().resolve().unwrap();
            assert!(!exp.cells.is_empty(), "{study}");
            assert_eq!(study.to_string().parse::<Study>().unwrap(), study);
        }
    }

    #[test]
    fn fig3_cells() {
        let exp = Study::Fig3.config().resolve().unwrap();
        let ids: Vec<&str> = exp.cells.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids.len(), 6);
        assert_eq!(ids[5], "online_bse-T50000-g37");
    }

    #[test]
    fn thm4_has_three_regimes_per_horizon() {
        let exp = Study::Thm4.config().resolve().unwrap();
        let statics = exp
            .cells
            .iter()
            .filter(|c| matches!(c.policy, PolicySpec::StaticSe { .. }))
            .count();
        assert_eq!(statics, 9);
        assert_eq!(exp.cells.len(), 12);
    }
}
