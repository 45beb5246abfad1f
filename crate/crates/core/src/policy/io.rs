//! Binary checkpoint format for [`TanhGaussianPolicy`].
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic        4 bytes  "MSCP"
//! version      u32      1
//! state_dim    u32      d
//! action_dim   u32      m
//! n_sizes      u32      number of layer sizes, including input and output
//! sizes        u32 * n_sizes
//! scale        f64 * m  action box half-widths a
//! shift        f64 * m  action box centers b
//! n_values     u64      length of the flat parameter vector
//! values       f64 * n_values
//! ```

use std::fs;
use std::path::Path;

use super::{PolicyParams, TanhGaussianPolicy};
use crate::env::ActionBox;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MSCP";
const VERSION: u32 = 1;

pub fn encode_policy(policy: &TanhGaussianPolicy) -> Vec<u8> {
    let p = policy.policy_params();
    let bx = policy.action_box();
    let mut out = Vec::with_capacity(64 + 8 * p.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(p.output_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(p.sizes().len() as u32).to_le_bytes());
    for &s in p.sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for v in bx.scale.iter().chain(&bx.shift) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(p.values().len() as u64).to_le_bytes());
    for v in p.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::Config("truncated policy checkpoint".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_policy(bytes: &[u8]) -> Result<TanhGaussianPolicy> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::Config("not a policy checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Config(format!("unsupported checkpoint version {version}")));
    }
    let d = r.u32()? as usize;
    let m = r.u32()? as usize;
    let n_sizes = r.u32()? as usize;
    if n_sizes > 64 {
        return Err(Error::Config(format!("implausible layer count {n_sizes}")));
    }
    let sizes = (0..n_sizes).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    if sizes.first() != Some(&d) || sizes.last() != Some(&m) {
        return Err(Error::Config("checkpoint header dimensions disagree with layer sizes".into()));
    }
    let scale = (0..m).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let shift = (0..m).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let n = r.u64()? as usize;
    if n != PolicyParams::total_len(&sizes) {
        return Err(Error::Config("checkpoint parameter count disagrees with layer sizes".into()));
    }
    let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if !r.buf.is_empty() {
        return Err(Error::Config("trailing bytes after policy checkpoint".into()));
    }
    TanhGaussianPolicy::new(PolicyParams::from_values(sizes, values)?, ActionBox::new(scale, shift)?)
}

pub fn write_policy(policy: &TanhGaussianPolicy, path: &Path) -> std::io::Result<()> {
    fs::write(path, encode_policy(policy))
}

pub fn read_policy(path: &Path) -> std::result::Result<TanhGaussianPolicy, Box<dyn std::error::Error + Send + Sync>> {
    let bytes = fs::read(path)?;
    Ok(decode_policy(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(seed in any::<u64>(), hidden in proptest::collection::vec(1usize..6, 0..3), m in 1usize..3) {
            let bx = ActionBox::new(vec![1.5; m], vec![-0.25; m]).unwrap();
            let pol = TanhGaussianPolicy::init(3, &hidden, bx, &mut RngStream::new(seed).rng()).unwrap();
            let bytes = encode_policy(&pol);
            prop_assert_eq!(decode_policy(&bytes).unwrap(), pol);
        }
    }

    #[test]
    fn header_is_little_endian() {
        let bx = ActionBox::symmetric(vec![2.0]).unwrap();
        let pol = TanhGaussianPolicy::new(PolicyParams::zeros(vec![2, 1]).unwrap(), bx).unwrap();
        let b = encode_policy(&pol);
        assert_eq!(&b[..4], b"MSCP");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[2, 0, 0, 0]);
        assert_eq!(b.len(), 4 + 4 * 4 + 2 * 4 + 16 + 8 + 8 * 4);
    }

    #[test]
    fn rejects_corruption() {
        let bx = ActionBox::symmetric(vec![2.0]).unwrap();
        let pol = TanhGaussianPolicy::new(PolicyParams::zeros(vec![2, 1]).unwrap(), bx).unwrap();
        let b = encode_policy(&pol);
        assert!(decode_policy(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_policy(&bad).is_err());
        let mut extra = b;
        extra.push(0);
        assert!(decode_policy(&extra).is_err());
    }
}
