use super::{AutodiffError, ParamSet, Tensor};
use std::io::{Read, Write};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FLP1";

const MAX_NAME: u32 = 1 << 16;
const MAX_RANK: u32 = 16;

/// Ordered named tensor blocks, as stored in an `FLP1` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub blocks: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_params(params: &ParamSet) -> Self {
        Self {
            blocks: params
                .iter()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.blocks.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies every block of `params` from the block of the same name.
    pub fn load_into(&self, params: &mut ParamSet) -> Result<(), AutodiffError> {
        for id in params.ids().collect::<Vec<_>>() {
            let name = params.name(id).to_string();
            let t = self
                .get(&name)
                .ok_or_else(|| AutodiffError::Checkpoint(format!("missing block `{name}`")))?;
            if t.shape() != params.get(id).shape() {
                return Err(AutodiffError::Checkpoint(format!(
                    "block `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    params.get(id).shape()
                )));
            }
            *params.get_mut(id) = t.clone();
        }
        Ok(())
    }
}

pub fn write_checkpoint(w: &mut impl Write, ckpt: &Checkpoint) -> Result<(), AutodiffError> {
    let io = |e: std::io::Error| AutodiffError::Checkpoint(e.to_string());
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(ckpt.blocks.len() as u32).to_le_bytes());
    for (name, t) in &ckpt.blocks {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io)
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint, AutodiffError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(AutodiffError::Checkpoint("bad magic, expected FLP1".into()));
    }
    let count = cur.u32()?;
    let mut ckpt = Checkpoint::default();
    for _ in 0..count {
        let len = cur.u32()?;
        if len > MAX_NAME {
            return Err(AutodiffError::Checkpoint(format!(
                "block name length {len}"
            )));
        }
        let name = std::str::from_utf8(cur.take(len as usize)?)
            .map_err(|_| AutodiffError::Checkpoint("block name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u32()?;
        if rank > MAX_RANK {
            return Err(AutodiffError::Checkpoint(format!(
                "block `{name}` has rank {rank}"
            )));
        }
        let shape = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= cur.remaining()))
            .ok_or_else(|| AutodiffError::Checkpoint(format!("block `{name}` is truncated")))?;
        let data = cur
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ckpt.push(name, Tensor::new(&shape, data)?);
    }
    if cur.remaining() != 0 {
        return Err(AutodiffError::Checkpoint(format!(
            "{} trailing bytes",
            cur.remaining()
        )));
    }
    Ok(ckpt)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], AutodiffError> {
        if self.remaining() < n {
            return Err(AutodiffError::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, AutodiffError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian() {
        let mut c = Checkpoint::default();
        c.push("ab", Tensor::new(&[2], vec![1.0, -2.5]).unwrap());
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c).unwrap();
        let mut want = b"FLP1".to_vec();
        want.extend(1u32.to_le_bytes());
        want.extend(2u32.to_le_bytes());
        want.extend(b"ab");
        want.extend(1u32.to_le_bytes());
        want.extend(2u32.to_le_bytes());
        want.extend(1.0f64.to_le_bytes());
        want.extend((-2.5f64).to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut c = Checkpoint::default();
        c.push("w", Tensor::zeros(&[3, 2]));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c).unwrap();
        for cut in 0..buf.len() {
            assert!(read_checkpoint(&mut &buf[..cut]).is_err());
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
        buf.push(0);
        assert!(read_checkpoint(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn load_into_checks_names_and_shapes() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::zeros(&[2]));
        let mut c = Checkpoint::default();
        c.push("w", Tensor::zeros(&[3]));
        assert!(c.load_into(&mut ps).is_err());
        let c = Checkpoint::default();
        assert!(c.load_into(&mut ps).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            blocks in proptest::collection::vec(
                ("[a-z.0-9]{0,12}", proptest::collection::vec(1usize..4, 0..4), any::<u64>()),
                0..5,
            )
        ) {
            let mut c = Checkpoint::default();
            for (name, shape, seed) in blocks {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|i| f64::from_bits(seed.wrapping_mul(i as u64 + 1) >> 2)).collect();
                c.push(name, Tensor::new(&shape, data).unwrap());
            }
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &c).unwrap();
            let back = read_checkpoint(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.blocks.len(), c.blocks.len());
            for ((na, ta), (nb, tb)) in back.blocks.iter().zip(&c.blocks) {
                prop_assert_eq!(na, nb);
                prop_assert_eq!(ta.shape(), tb.shape());
                let bits_a: Vec<u64> = ta.data().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = tb.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(bits_a, bits_b);
            }
        }
    }
}
