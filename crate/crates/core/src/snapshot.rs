//! Binary snapshot of a streaming fit, for resuming.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "MCMSNAP\0"
//! version    u32      1
//! dim        u64
//! q          u64      0 when no eigen tracker is attached
//! mode       u8       0 known median, 1 joint (unseeded), 2 joint (seeded)
//! psd_mode   u8
//! n_obs      u64
//! v_updates  u64
//! median_n   u64
//! schedules  4 x f64  c_median, alpha_median, c_mcm, alpha_mcm
//! m          d x f64  median iterate (known center in mode 0)
//! m_bar      d x f64  averaged median
//! V          d(d+1)/2 x f64, packed upper triangle
//! V_bar      d(d+1)/2 x f64
//! -- eigen section, present when q > 0 --
//! tracking   u8       0 collecting start vectors, 1 tracking
//! eigen_n    u64
//! pending    u64 count, then q x d f64 slots (unused slots zero)
//! raw        q x d f64
//! ortho      q x d f64
//! eigvals    q x f64
//! reinit     u64
//! rng        32-byte ChaCha20 seed, u128 word position, u8 has_spare, f64 spare
//! ```
//!
//! For fixed `dim` and `q` every snapshot has the same size.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geomedian::{MedianState, StepSchedule};
use crate::linalg::{RealVec, SymMat};
use crate::mcm::{Center, McmState};
use crate::online_pca::{EigenBasis, OnlineEigen};
use crate::rng::{RngState, StreamRng};

pub const MAGIC: &[u8; 8] = b"MCMSNAP\0";
pub const VERSION: u32 = 1;

struct Writer<W> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b)?;
        Ok(())
    }
    fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }
    fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u128(&mut self, v: u128) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        vs.iter().try_for_each(|&v| self.f64(v))
    }
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Snapshot(format!("truncated snapshot: {e}")))?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Snapshot("size overflows usize".into()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.bytes()?);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Snapshot("non-finite value".into()))
        }
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Snapshot(format!("invalid flag byte {other}"))),
        }
    }
}

pub fn write_snapshot<W: Write>(mcm: &McmState, eigen: Option<&OnlineEigen>, out: W) -> Result<()> {
    let mut w = Writer { inner: out };
    let d = mcm.dim;
    w.bytes(MAGIC)?;
    w.u32(VERSION)?;
    w.u64(d as u64)?;
    w.u64(eigen.map_or(0, |e| e.q as u64))?;
    let zeros = vec![0.0; d];
    let (mode, median_n, m, m_bar) = match &mcm.center {
        Center::Known(m) => (0u8, 0, m.as_slice(), m.as_slice()),
        Center::Joint(None) => (1, 0, zeros.as_slice(), zeros.as_slice()),
        Center::Joint(Some(ms)) => (2, ms.n, ms.m.as_slice(), ms.m_bar.as_slice()),
    };
    w.u8(mode)?;
    w.u8(mcm.psd_mode as u8)?;
    w.u64(mcm.n_obs)?;
    w.u64(mcm.v_updates)?;
    w.u64(median_n)?;
    for s in [mcm.median_schedule, mcm.schedule] {
        w.f64(s.c())?;
        w.f64(s.alpha())?;
    }
    w.f64s(m)?;
    w.f64s(m_bar)?;
    w.f64s(mcm.v.packed())?;
    w.f64s(mcm.v_bar.packed())?;

    if let Some(e) = eigen {
        let q = e.q;
        w.u8(e.basis.is_some() as u8)?;
        w.u64(e.basis.as_ref().map_or(0, |b| b.n))?;
        w.u64(e.pending.len() as u64)?;
        for slot in 0..q {
            w.f64s(
                e.pending
                    .get(slot)
                    .map_or(zeros.as_slice(), |p| p.as_slice()),
            )?;
        }
        match &e.basis {
            Some(b) => {
                b.raw.iter().try_for_each(|u| w.f64s(u))?;
                b.ortho.iter().try_for_each(|u| w.f64s(u))?;
                w.f64s(&b.eigvals)?;
            }
            None => {
                for _ in 0..2 * q {
                    w.f64s(&zeros)?;
                }
                w.f64s(&vec![0.0; q])?;
            }
        }
        w.u64(e.reinitialized)?;
        let rng = e.rng.state();
        w.bytes(&rng.seed)?;
        w.u128(rng.word_pos)?;
        w.u8(rng.spare.is_some() as u8)?;
        w.f64(rng.spare.unwrap_or(0.0))?;
    }
    w.inner.flush()?;
    Ok(())
}

/// Size in bytes of a snapshot for the given dimension and tracker size.
pub fn snapshot_len(dim: usize, q: usize) -> usize {
    let packed = dim * (dim + 1) / 2;
    let base = 8 + 4 + 8 + 8 + 1 + 1 + 8 * 3 + 8 * 4 + 8 * (2 * dim + 2 * packed);
    let eigen = if q == 0 {
        0
    } else {
        1 + 8 + 8 + 8 * (3 * q * dim + q) + 8 + 32 + 16 + 1 + 8
    };
    base + eigen
}

pub fn read_snapshot<R: Read>(input: R) -> Result<(McmState, Option<OnlineEigen>)> {
    let mut r = Reader { inner: input };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Snapshot("bad magic; not an mcm snapshot".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported snapshot version {version}"
        )));
    }
    let d = r.usize()?;
    let q = r.usize()?;
    if d == 0 || q > d || d > 1 << 20 {
        return Err(Error::Snapshot(format!("invalid dimensions d={d}, q={q}")));
    }
    let mode = r.u8()?;
    let psd_mode = r.flag()?;
    let n_obs = r.u64()?;
    let v_updates = r.u64()?;
    let median_n = r.u64()?;
    let schedule = |r: &mut Reader<R>| -> Result<StepSchedule> {
        let (c, a) = (r.f64()?, r.f64()?);
        StepSchedule::new(c, a).map_err(|e| Error::Snapshot(e.to_string()))
    };
    let median_schedule = schedule(&mut r)?;
    let mcm_schedule = schedule(&mut r)?;
    let m = r.f64s(d)?;
    let m_bar = r.f64s(d)?;
    let packed = d * (d + 1) / 2;
    let v = SymMat::from_packed(d, r.f64s(packed)?)?;
    let v_bar = SymMat::from_packed(d, r.f64s(packed)?)?;
    let center = match mode {
        0 => Center::Known(m),
        1 => Center::Joint(None),
        2 => Center::Joint(Some(MedianState {
            n: median_n,
            m,
            m_bar,
            schedule: median_schedule,
        })),
        other => return Err(Error::Snapshot(format!("invalid mode byte {other}"))),
    };
    let mcm = McmState {
        dim: d,
        n_obs,
        center,
        median_schedule,
        schedule: mcm_schedule,
        psd_mode,
        v,
        v_bar,
        v_updates,
    };

    let eigen = if q == 0 {
        None
    } else {
        let tracking = r.flag()?;
        let eigen_n = r.u64()?;
        let pending_count = r.usize()?;
        if pending_count > q || (tracking && pending_count != 0) {
            return Err(Error::Snapshot(format!(
                "invalid pending count {pending_count}"
            )));
        }
        let mut pending = Vec::with_capacity(pending_count);
        for slot in 0..q {
            let p = r.f64s(d)?;
            if slot < pending_count {
                pending.push(p);
            }
        }
        let raw: Vec<Vec<f64>> = (0..q).map(|_| r.f64s(d)).collect::<Result<_>>()?;
        let ortho: Vec<Vec<f64>> = (0..q).map(|_| r.f64s(d)).collect::<Result<_>>()?;
        let eigvals = r.f64s(q)?;
        let reinitialized = r.u64()?;
        let seed = r.bytes::<32>()?;
        let word_pos = r.u128()?;
        let has_spare = r.flag()?;
        let spare = r.f64()?;
        let rng = StreamRng::from_state(&RngState {
            seed,
            word_pos,
            spare: has_spare.then_some(spare),
        });
        let basis = tracking.then(|| EigenBasis {
            n: eigen_n,
            raw,
            ortho: ortho.into_iter().map(RealVec::from_raw).collect(),
            eigvals,
        });
        Some(OnlineEigen {
            dim: d,
            q,
            pending,
            basis,
            rng,
            reinitialized,
        })
    };

    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(Error::Snapshot("trailing bytes after snapshot".into()));
    }
    Ok((mcm, eigen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcm::McmConfig;

    fn fed_state(rows: usize, q: usize) -> (McmState, OnlineEigen) {
        let mut mcm = McmState::joint(4, &McmConfig::default()).unwrap();
        let mut eig = OnlineEigen::new(4, q, 17).unwrap();
        for i in 0..rows {
            let t = i as f64;
            let x = [t.sin(), (0.3 * t).cos() * 2.0, 0.1 * t, (t * 1.7).sin()];
            let center = mcm.center().map(|c| c.to_vec());
            mcm.update_slice(&x);
            if let Some(c) = center {
                let y: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
                eig.observe(&y, &mcm.v_bar).unwrap();
            }
        }
        (mcm, eig)
    }

    #[test]
    fn round_trip_is_exact() {
        for rows in [0, 1, 2, 30] {
            let (mcm, eig) = fed_state(rows, 2);
            let mut buf = Vec::new();
            write_snapshot(&mcm, Some(&eig), &mut buf).unwrap();
            assert_eq!(buf.len(), snapshot_len(4, 2), "rows {rows}");
            let (m2, e2) = read_snapshot(buf.as_slice()).unwrap();
            assert_eq!(m2, mcm);
            let e2 = e2.unwrap();
            assert_eq!(e2.basis, eig.basis);
            assert_eq!(e2.pending, eig.pending);
            assert_eq!(e2.rng.state(), eig.rng.state());
        }
    }

    #[test]
    fn known_mode_without_tracker() {
        let mut mcm = McmState::known_median(RealVec::zeros(3), &McmConfig::default()).unwrap();
        mcm.update_slice(&[1.0, 2.0, 3.0]);
        let mut buf = Vec::new();
        write_snapshot(&mcm, None, &mut buf).unwrap();
        assert_eq!(buf.len(), snapshot_len(3, 0));
        let (back, eig) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, mcm);
        assert!(eig.is_none());
    }

    #[test]
    fn corrupt_input_rejected() {
        let (mcm, eig) = fed_state(10, 1);
        let mut buf = Vec::new();
        write_snapshot(&mcm, Some(&eig), &mut buf).unwrap();
        assert!(read_snapshot(&buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_snapshot(bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(read_snapshot(bad.as_slice()).is_err());
        let mut long = buf;
        long.push(0);
        assert!(read_snapshot(long.as_slice()).is_err());
    }
}
