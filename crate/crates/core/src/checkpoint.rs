//! Binary checkpoints of an [`EstimatorState`].
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "NWTN"                      magic
//! u32                         format version (1)
//! u8 grid tag                 0 = rectangular spec, 1 = explicit atoms
//!   tag 0: 6 x f64            mean_min mean_max mean_step var_min var_max var_step
//!   tag 1: u64 count, then count x (f64 mean, f64 variance)
//! f64 alpha, f64 gamma        learning-rate schedule
//! u8 family, f64 std_dev      noise (0 = laplace, 1 = gaussian)
//! u64 n                       observations absorbed
//! u64 K, then K x f64         pmf
//! u32                         CRC32 (IEEE) of every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::engine::{EstimatorState, LearningRateSchedule};
use crate::error::{Error, Result};
use crate::model::{GridSpec, MixingPmf, ParameterGrid, ThetaAtom};
use crate::noise::{NoiseFamily, NoiseModel};

pub const MAGIC: &[u8; 4] = b"NWTN";
pub const FORMAT_VERSION: u32 = 1;

/// Looser than the construction tolerance: long runs accumulate rounding in the total.
const LOAD_SUM_TOL: f64 = 1e-9;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Serialize a state.
pub fn save(state: &EstimatorState) -> Vec<u8> {
    let grid = state.grid();
    let k = grid.len();
    let mut out = Vec::with_capacity(64 + 8 * k);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    match grid.spec() {
        Some(spec) => {
            out.push(0);
            for v in spec.as_array() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        None => {
            out.push(1);
            out.extend_from_slice(&(k as u64).to_le_bytes());
            for a in grid.atoms() {
                out.extend_from_slice(&a.mean().to_le_bytes());
                out.extend_from_slice(&a.variance().to_le_bytes());
            }
        }
    }
    out.extend_from_slice(&state.schedule().alpha().to_le_bytes());
    out.extend_from_slice(&state.schedule().gamma().to_le_bytes());
    out.push(match state.noise().family() {
        NoiseFamily::Laplace => 0,
        NoiseFamily::Gaussian => 1,
    });
    out.extend_from_slice(&state.noise().std_dev().to_le_bytes());
    out.extend_from_slice(&state.n().to_le_bytes());
    out.extend_from_slice(&(k as u64).to_le_bytes());
    for w in state.pmf().weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| bad(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// Element count that must still fit in the remaining bytes.
    fn count(&mut self, elem_size: usize, what: &str) -> Result<usize> {
        let c = self.u64(what)?;
        let room = (self.buf.len() - self.pos) / elem_size;
        if c > room as u64 {
            return Err(bad(format!("truncated: {what} claims {c} entries")));
        }
        Ok(c as usize)
    }
}

/// Parse and validate a checkpoint. Nothing is returned unless every check passes.
pub fn load(bytes: &[u8]) -> Result<EstimatorState> {
    if bytes.len() < 4 + 4 + 4 {
        return Err(bad("truncated: shorter than header and checksum"));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic, not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(bad("checksum mismatch (corrupt or truncated file)"));
    }

    let mut r = Reader { buf: body, pos: 8 };
    let grid = match r.u8("grid tag")? {
        0 => {
            let mut a = [0.0; 6];
            for v in a.iter_mut() {
                *v = r.f64("grid spec")?;
            }
            let spec = GridSpec::from_array(a);
            let (nm, nv) = spec.shape().map_err(|e| bad(format!("invalid grid: {e}")))?;
            // the pmf must still fit; refuse before allocating the grid
            let room = (r.buf.len() - r.pos) / 8;
            if nm.saturating_mul(nv) > room {
                return Err(bad(format!("truncated: grid of {nm} x {nv} atoms has no room for its pmf")));
            }
            ParameterGrid::from_spec(spec).map_err(|e| bad(format!("invalid grid: {e}")))?
        }
        1 => {
            let count = r.count(16, "atom list")?;
            let mut atoms = Vec::with_capacity(count);
            for _ in 0..count {
                let m = r.f64("atom mean")?;
                let v = r.f64("atom variance")?;
                atoms.push(ThetaAtom::new(m, v).map_err(|e| bad(format!("invalid atom: {e}")))?);
            }
            ParameterGrid::from_atoms(atoms).map_err(|e| bad(format!("invalid grid: {e}")))?
        }
        t => return Err(bad(format!("unknown grid tag {t}"))),
    };
    let alpha = r.f64("alpha")?;
    let gamma = r.f64("gamma")?;
    let schedule = LearningRateSchedule::new(alpha, gamma)
        .map_err(|e| bad(format!("invalid schedule: {e}")))?;
    let family = match r.u8("noise family")? {
        0 => NoiseFamily::Laplace,
        1 => NoiseFamily::Gaussian,
        f => return Err(bad(format!("unknown noise family tag {f}"))),
    };
    let sd = r.f64("noise sd")?;
    let noise = NoiseModel::new(family, sd).map_err(|e| bad(format!("invalid noise: {e}")))?;
    let n = r.u64("observation count")?;
    let k = r.count(8, "pmf")?;
    if k != grid.len() {
        return Err(bad(format!(
            "pmf has {k} entries but grid has {} atoms",
            grid.len()
        )));
    }
    let mut weights = Vec::with_capacity(k);
    for _ in 0..k {
        weights.push(r.f64("pmf")?);
    }
    if r.pos != body.len() {
        return Err(bad(format!(
            "{} trailing bytes before checksum",
            body.len() - r.pos
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(bad("pmf has a negative or non-finite entry"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > LOAD_SUM_TOL {
        return Err(bad(format!("pmf sums to {total}")));
    }
    EstimatorState::from_parts(grid, MixingPmf::from_raw(weights), n, schedule, noise)
}

/// Write a checkpoint through a temporary sibling file and rename it into place.
pub fn save_to_path(state: &EstimatorState, path: &Path) -> Result<()> {
    let bytes = save(state);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_from_path(path: &Path) -> Result<EstimatorState> {
    let bytes = fs::read(path)?;
    load(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_state() -> EstimatorState {
        let grid = ParameterGrid::from_spec(GridSpec::DESK).unwrap();
        let mut s = EstimatorState::new(
            grid,
            LearningRateSchedule::new(1.0, 0.8).unwrap(),
            NoiseModel::laplace(0.5).unwrap(),
        )
        .unwrap();
        s.fit([0.3, -1.2, 2.5, 0.0, 4.1]).unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample_state();
        let bytes = save(&s);
        let back = load(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(save(&back), bytes);
    }

    #[test]
    fn explicit_atoms_round_trip() {
        let grid = ParameterGrid::from_atoms(vec![
            ThetaAtom::new(-1.0, 0.5).unwrap(),
            ThetaAtom::new(2.0, 1.5).unwrap(),
        ])
        .unwrap();
        let s = EstimatorState::new(
            grid,
            LearningRateSchedule::harmonic(),
            NoiseModel::gaussian(1.0).unwrap(),
        )
        .unwrap();
        let bytes = save(&s);
        assert_eq!(load(&bytes).unwrap(), s);
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = save(&sample_state());
        for cut in 0..bytes.len() {
            assert!(load(&bytes[..cut]).is_err(), "prefix {cut} accepted");
        }
    }

    #[test]
    fn corruption_and_version_are_detected() {
        let mut bytes = save(&sample_state());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        let e = load(&bytes).unwrap_err();
        assert!(e.to_string().contains("checksum"), "{e}");

        let mut bytes = save(&sample_state());
        bytes[4] = 2;
        let e = load(&bytes).unwrap_err();
        assert!(e.to_string().contains("version"), "{e}");

        let e = load(b"XXXXxxxxxxxxxxxx").unwrap_err();
        assert!(e.to_string().contains("magic"), "{e}");
    }
}
