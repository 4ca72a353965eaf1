//! Machine parameters from flags, `PSLAB_*` environment variables and
//! defaults, in that order of precedence.

use clap::{Args, ValueEnum};
use pslab::machine::Profile;
use pslab::MachineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Kepler,
    Maxwell,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Kepler => Profile::Kepler,
            ProfileArg::Maxwell => Profile::Maxwell,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct MachineArgs {
    /// Device profile supplying K, L and internal memory defaults.
    #[arg(long, env = "PSLAB_PROFILE", value_enum)]
    pub profile: Option<ProfileArg>,
    /// Warp width W; block size and bank count follow it.
    #[arg(long, env = "PSLAB_W")]
    pub warp_width: Option<usize>,
    #[arg(long, env = "PSLAB_B")]
    pub block_size: Option<usize>,
    #[arg(long, env = "PSLAB_BANKS")]
    pub banks: Option<usize>,
    /// Number of warps P.
    #[arg(short = 'p', long, env = "PSLAB_P")]
    pub warps: Option<usize>,
    /// Branch factor K.
    #[arg(short = 'k', long, env = "PSLAB_K")]
    pub k: Option<usize>,
    /// Items per thread in the pairwise baseline (L).
    #[arg(short = 'l', long, env = "PSLAB_L")]
    pub l: Option<usize>,
    /// Shared-memory words per warp (M).
    #[arg(long, env = "PSLAB_M")]
    pub internal_memory: Option<usize>,
    #[arg(long, env = "PSLAB_BASE")]
    pub base: Option<usize>,
    /// Largest base run reachable by doubling; defaults to 4·W².
    #[arg(long, env = "PSLAB_BASE_LIMIT")]
    pub base_limit: Option<usize>,
}

impl MachineArgs {
    pub fn resolve(&self) -> pslab::Result<MachineConfig> {
        let mut cfg = self.profile.map(|p| Profile::from(p).config()).unwrap_or_default();
        if let Some(w) = self.warp_width {
            cfg.warp_width = w;
            cfg.block_size = w;
            cfg.num_banks = w;
            cfg.base_limit = cfg.base_limit.max(4 * w * w);
        }
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.block_size, self.block_size);
        set(&mut cfg.num_banks, self.banks);
        set(&mut cfg.num_warps, self.warps);
        set(&mut cfg.branch_factor, self.k);
        set(&mut cfg.thread_merge_len, self.l);
        set(&mut cfg.internal_memory, self.internal_memory);
        set(&mut cfg.base_size, self.base);
        cfg.base_limit = self.base_limit.unwrap_or(cfg.base_limit.max(cfg.base_size));
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library() {
        assert_eq!(MachineArgs::default().resolve().unwrap(), MachineConfig::default());
    }

    #[test]
    fn flags_override_profile() {
        let args = MachineArgs { profile: Some(ProfileArg::Maxwell), k: Some(16), ..Default::default() };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.branch_factor, 16);
        assert_eq!(cfg.thread_merge_len, 15);
    }

    #[test]
    fn invalid_combination_rejected() {
        let args = MachineArgs { l: Some(16), ..Default::default() };
        assert!(args.resolve().is_err());
    }
}
