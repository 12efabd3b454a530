use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::io::write_atomic;
use crate::error::{Error, Result};
use crate::meanfield::{subspace_moments_mf2, MfTolerances};
use crate::model::{enumerate_subspaces, ModelParams, SpinSubspace};
use crate::subspace::{steady_state, SteadyOptions, SubspaceMoments};

/// Largest N for which DM moments are computed for every subspace. The
/// top subspaces of N = 24 already take minutes each.
pub const DM_ATOM_CAP: u32 = 16;

/// Where per-subspace moments come from, with the tolerances that shaped them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MomentSource {
    Dm(SteadyOptions),
    Mf2(MfTolerances),
}

impl MomentSource {
    pub fn dm() -> Self {
        MomentSource::Dm(SteadyOptions::default())
    }

    pub fn mf2() -> Self {
        MomentSource::Mf2(MfTolerances::default())
    }

    pub fn tag(&self) -> &'static str {
        match self {
            MomentSource::Dm(_) => "DM",
            MomentSource::Mf2(_) => "MF2",
        }
    }

    pub fn compute(&self, params: &ModelParams, sub: SpinSubspace) -> Result<SubspaceMoments> {
        match self {
            MomentSource::Dm(o) => steady_state(params, sub, o).map(|(_, m)| m),
            MomentSource::Mf2(t) => subspace_moments_mf2(params, sub, t),
        }
    }
}

/// SHA-256 of the compact JSON of `value`, hex encoded. Struct fields
/// serialize in declaration order, so equal inputs hash equally.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct Key<'a> {
    params: &'a ModelParams,
    two_s: u32,
    source: &'a MomentSource,
}

/// Content-addressed store of subspace moments, one JSON record per key.
/// Without a directory every lookup recomputes.
#[derive(Clone, Debug, Default)]
pub struct MomentCache {
    dir: Option<PathBuf>,
}

impl MomentCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MomentCache { dir: Some(dir.into()) }
    }

    pub fn disabled() -> Self {
        MomentCache { dir: None }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(&key[..2]).join(format!("{key}.json")))
    }

    pub fn key(params: &ModelParams, two_s: u32, source: &MomentSource) -> Result<String> {
        content_hash(&Key { params, two_s, source })
    }

    pub fn get_or_compute(
        &self,
        params: &ModelParams,
        sub: SpinSubspace,
        source: &MomentSource,
    ) -> Result<SubspaceMoments> {
        let key = Self::key(params, sub.two_s, source)?;
        let path = self.path(&key);
        if let Some(p) = &path {
            if let Ok(text) = fs::read_to_string(p) {
                // a corrupt record is recomputed and overwritten
                if let Ok(m) = serde_json::from_str::<SubspaceMoments>(&text) {
                    if m.two_s == sub.two_s {
                        return Ok(m);
                    }
                }
            }
        }
        let m = source.compute(params, sub)?;
        if let Some(p) = &path {
            // shortest round-trip float text, so a reload is bit-identical
            write_atomic(p, &serde_json::to_vec(&m)?)?;
        }
        Ok(m)
    }

    /// Moments of every subspace of `params.n_atoms`, in subspace order.
    /// Subspaces run in parallel on the current rayon pool.
    pub fn moments_all(&self, params: &ModelParams, source: &MomentSource) -> Result<Vec<SubspaceMoments>> {
        if let MomentSource::Dm(_) = source {
            if params.n_atoms > DM_ATOM_CAP {
                return Err(Error::ResourceCap(format!(
                    "DM moments for all subspaces need N <= {DM_ATOM_CAP}, got N = {}",
                    params.n_atoms
                )));
            }
        }
        let subs = enumerate_subspaces(params.n_atoms)?;
        subs.par_iter().map(|&s| self.get_or_compute(params, s, source)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = MomentCache::new(dir.path());
        let p = ModelParams::reference(0.9, 40);
        let src = MomentSource::mf2();
        let a = cache.moments_all(&p, &src).unwrap();
        let b = cache.moments_all(&p, &src).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.sz_mean.to_bits(), y.sz_mean.to_bits());
            assert_eq!(x.sz2_mean.to_bits(), y.sz2_mean.to_bits());
            assert_eq!(x.photon_mean.to_bits(), y.photon_mean.to_bits());
        }
        let c = MomentCache::disabled().moments_all(&p, &src).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn keys_separate_parameters_and_methods() {
        let p = ModelParams::reference(0.9, 40);
        let k = |p: &ModelParams, s, src: &MomentSource| MomentCache::key(p, s, src).unwrap();
        let base = k(&p, 10, &MomentSource::mf2());
        assert_eq!(base, k(&p, 10, &MomentSource::mf2()));
        assert_ne!(base, k(&p, 12, &MomentSource::mf2()));
        assert_ne!(base, k(&p.with_g(0.8), 10, &MomentSource::mf2()));
        assert_ne!(base, k(&p, 10, &MomentSource::dm()));
        let loose = MomentSource::Mf2(MfTolerances { rtol: 1e-8, ..Default::default() });
        assert_ne!(base, k(&p, 10, &loose));
    }

    #[test]
    fn dm_cap_enforced() {
        let p = ModelParams::reference(0.9, DM_ATOM_CAP + 2);
        assert!(matches!(MomentCache::disabled().moments_all(&p, &MomentSource::dm()), Err(Error::ResourceCap(_))));
    }
}
