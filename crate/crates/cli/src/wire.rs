//! Headerless little-endian record files.

use std::fmt::Debug;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

/// A fixed-width little-endian field.
pub trait Wire: Copy + Debug + Send + Sync + 'static {
    const WIDTH: usize;
    fn read(bytes: &[u8]) -> Self;
    fn put(self, out: &mut Vec<u8>);
}

macro_rules! wire {
    ($($t:ty),*) => {$(
        impl Wire for $t {
            const WIDTH: usize = std::mem::size_of::<$t>();
            #[inline]
            fn read(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("field width"))
            }
            #[inline]
            fn put(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
        }
    )*};
}

wire!(u32, u64, i32, i64, f32, f64);

/// Bitwise equality, so that NaN payloads compare by their encoding.
pub fn same_bits<T: Wire>(a: T, b: T) -> bool {
    let (mut x, mut y) = (Vec::with_capacity(8), Vec::with_capacity(8));
    a.put(&mut x);
    b.put(&mut y);
    x == y
}

fn read_file(path: &Path, record: usize) -> Result<Vec<u8>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() % record != 0 {
        bail!(
            "{}: size {} bytes is not a multiple of the {}-byte record width",
            path.display(),
            bytes.len(),
            record
        );
    }
    Ok(bytes)
}

pub fn read_keys<K: Wire>(path: &Path) -> Result<Vec<K>> {
    let bytes = read_file(path, K::WIDTH)?;
    Ok(bytes.chunks_exact(K::WIDTH).map(K::read).collect())
}

pub fn read_pairs<K: Wire, V: Wire>(path: &Path) -> Result<(Vec<K>, Vec<V>)> {
    let width = K::WIDTH + V::WIDTH;
    let bytes = read_file(path, width)?;
    Ok(bytes
        .chunks_exact(width)
        .map(|r| (K::read(&r[..K::WIDTH]), V::read(&r[K::WIDTH..])))
        .unzip())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
}

pub fn write_keys<K: Wire>(path: &Path, keys: &[K]) -> Result<()> {
    let mut out = Vec::with_capacity(keys.len() * K::WIDTH);
    for &k in keys {
        k.put(&mut out);
    }
    write_bytes(path, &out)
}

pub fn write_pairs<K: Wire, V: Wire>(path: &Path, keys: &[K], values: &[V]) -> Result<()> {
    let mut out = Vec::with_capacity(keys.len() * (K::WIDTH + V::WIDTH));
    for (&k, &v) in keys.iter().zip(values) {
        k.put(&mut out);
        v.put(&mut out);
    }
    write_bytes(path, &out)
}
