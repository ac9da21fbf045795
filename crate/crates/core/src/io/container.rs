//! Map container: `MCH1` magic line, one JSON header line, then row-major,
//! channel-interleaved little-endian f32 samples.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const MAP_MAGIC: &str = "MCH1";
const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapHeader {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub channel_names: Vec<String>,
    pub dtype: String,
}

pub fn write_map<W: Write>(mut out: W, grid: &Grid, names: &[&str]) -> Result<()> {
    if names.len() != grid.channels() {
        return Err(Error::Format(format!(
            "{} channel names for {} channels",
            names.len(),
            grid.channels()
        )));
    }
    let header = MapHeader {
        height: grid.height(),
        width: grid.width(),
        channels: grid.channels(),
        channel_names: names.iter().map(|s| s.to_string()).collect(),
        dtype: DTYPE.into(),
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;
    let plane = grid.plane_len();
    let mut buf = Vec::with_capacity(plane * grid.channels() * 4 + json.len() + 8);
    buf.extend_from_slice(MAP_MAGIC.as_bytes());
    buf.push(b'\n');
    buf.extend_from_slice(json.as_bytes());
    buf.push(b'\n');
    let d = grid.data();
    for i in 0..plane {
        for ch in 0..grid.channels() {
            buf.extend_from_slice(&(d[ch * plane + i] as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_map<R: Read>(input: R) -> Result<(Grid, MapHeader)> {
    let mut r = BufReader::new(input);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end_matches('\n') != MAP_MAGIC {
        return Err(Error::Format("not a map container (bad magic)".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    let header: MapHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("map header: {e}")))?;
    if header.dtype != DTYPE {
        return Err(Error::Format(format!("unsupported dtype {}", header.dtype)));
    }
    if header.channel_names.len() != header.channels {
        return Err(Error::Format("channel name count does not match channels".into()));
    }
    let plane = header.height * header.width;
    let mut bytes = vec![0u8; plane * header.channels * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let mut data = vec![0.0; plane * header.channels];
    for (k, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
        let (i, ch) = (k / header.channels, k % header.channels);
        data[ch * plane + i] = v;
    }
    let grid = Grid::from_vec(header.channels, header.height, header.width, data)?;
    Ok((grid, header))
}

pub fn save_map(path: &Path, grid: &Grid, names: &[&str]) -> Result<()> {
    let mut bytes = Vec::new();
    write_map(&mut bytes, grid, names)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_map(path: &Path) -> Result<(Grid, MapHeader)> {
    let f = std::fs::File::open(path)?;
    read_map(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_exact() {
        let g = Grid::from_fn(3, 5, 4, |c, r, k| {
            (c as f64 + 0.1) * (r as f64 - 1.7) / (k as f64 + 0.3)
        });
        let mut a = Vec::new();
        write_map(&mut a, &g, &["x", "y", "z"]).unwrap();
        let (back, header) = read_map(&a[..]).unwrap();
        assert_eq!(header.channel_names, vec!["x", "y", "z"]);
        assert!(back.max_abs_diff(&g) < 1e-6);
        let mut b = Vec::new();
        write_map(&mut b, &back, &["x", "y", "z"]).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[..5], b"MCH1\n");
    }

    #[test]
    fn payload_is_interleaved() {
        let g = Grid::from_vec(2, 1, 2, vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let mut a = Vec::new();
        write_map(&mut a, &g, &["a", "b"]).unwrap();
        let payload = &a[a.len() - 16..];
        let vals: Vec<f32> = payload
            .chunks(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(vals, vec![1.0, 10.0, 2.0, 20.0]);
    }

    #[test]
    fn rejects_corruption() {
        let g = Grid::zeros(1, 2, 2);
        let mut a = Vec::new();
        write_map(&mut a, &g, &["a"]).unwrap();
        assert!(matches!(read_map(&a[..a.len() - 1]), Err(Error::Format(_))));
        let mut extra = a.clone();
        extra.push(0);
        assert!(read_map(&extra[..]).is_err());
        let mut bad = a.clone();
        bad[0] = b'X';
        assert!(read_map(&bad[..]).is_err());
        assert!(write_map(Vec::new(), &g, &["a", "b"]).is_err());
    }
}
