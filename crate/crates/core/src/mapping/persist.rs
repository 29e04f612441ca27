use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::descriptor::Descriptor;
use crate::geometry::{Heightmap, RigidTransform, SensorIntrinsics, TactileImage};
use crate::mapping::{TactileMap, TactileMapEntry};
use crate::{Error, FormatError, Result};

pub const MAP_MAGIC: &[u8; 4] = b"TMAP";
pub const MAP_FORMAT_VERSION: u32 = 1;

/// Serializes a map: magic, version, CRC-32 of the payload, then the payload
/// (object id, intrinsics, entries). All numbers little-endian; image and
/// heightmap grids are row-major 32-bit floats; poses and descriptors are
/// 64-bit floats. The entry clouds are not stored; they are re-derived from
/// the heightmaps on load.
pub fn save_map(map: &TactileMap, path: &Path) -> Result<()> {
    let payload = encode_payload(map);
    let mut bytes = Vec::with_capacity(payload.len() + 12);
    bytes.extend_from_slice(MAP_MAGIC);
    bytes.extend_from_slice(&MAP_FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    bytes.extend_from_slice(&payload);
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_map(path: &Path) -> Result<TactileMap> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 {
        return Err(FormatError::Truncated("header".into()).into());
    }
    if &bytes[0..4] != MAP_MAGIC {
        return Err(FormatError::BadMagic.into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MAP_FORMAT_VERSION {
        return Err(FormatError::Version {
            found: version,
            expected: MAP_FORMAT_VERSION,
        }
        .into());
    }
    let stored_crc = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let payload = &bytes[12..];
    let computed = crc32fast::hash(payload);
    if computed != stored_crc {
        return Err(FormatError::Checksum {
            stored: stored_crc,
            computed,
        }
        .into());
    }
    decode_payload(payload)
}

fn encode_payload(map: &TactileMap) -> Vec<u8> {
    let mut out = Vec::new();
    let id = map.object_id.as_bytes();
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id);
    let intr = &map.intrinsics;
    out.extend_from_slice(&(intr.width as u32).to_le_bytes());
    out.extend_from_slice(&(intr.height as u32).to_le_bytes());
    out.extend_from_slice(&intr.pixel_pitch.to_le_bytes());
    out.extend_from_slice(&intr.gel_max_indentation.to_le_bytes());
    write_transform(&mut out, &intr.sensor_frame);
    out.extend_from_slice(&(map.entries.len() as u32).to_le_bytes());
    for entry in &map.entries {
        for k in 0..3 {
            for &v in entry.image.channel(k) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for &d in entry.heightmap.depths() {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &m in entry.heightmap.mask() {
            out.push(m as u8);
        }
        let desc = entry.descriptor.values();
        out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
        for &v in desc {
            out.extend_from_slice(&v.to_le_bytes());
        }
        write_transform(&mut out, &entry.sensor_pose_world);
        out.extend_from_slice(&entry.gripper_opening.to_le_bytes());
    }
    out
}

fn decode_payload(payload: &[u8]) -> Result<TactileMap> {
    let mut r = Reader {
        buf: payload,
        pos: 0,
    };
    let id_len = r.u32("object id length")? as usize;
    let object_id = String::from_utf8(r.take(id_len, "object id")?.to_vec())
        .map_err(|_| FormatError::Malformed("object id is not utf-8".into()))?;
    let width = r.u32("width")? as usize;
    let height = r.u32("height")? as usize;
    let pixel_pitch = r.f64("pixel pitch")?;
    let gel_max_indentation = r.f64("max indentation")?;
    let sensor_frame = r.transform("sensor frame")?;
    let intrinsics = SensorIntrinsics {
        width,
        height,
        pixel_pitch,
        gel_max_indentation,
        sensor_frame,
    };
    intrinsics
        .validate()
        .map_err(|e| FormatError::Malformed(format!("intrinsics: {e}")))?;
    let n_entries = r.u32("entry count")? as usize;
    let npx = width * height;
    let mut entries = Vec::with_capacity(n_entries);
    for i in 0..n_entries {
        let ctx = |what: &str| format!("entry {i} {what}");
        let mut channels: [Vec<f32>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for ch in &mut channels {
            *ch = r.f32s(npx, &ctx("image channel"))?;
        }
        let image = TactileImage::new(width, height, channels)
            .map_err(|e| FormatError::Malformed(format!("{}: {e}", ctx("image"))))?;
        let depths = r.f32s(npx, &ctx("heightmap"))?;
        let mask_bytes = r.take(npx, &ctx("mask"))?;
        let mask: Vec<bool> = mask_bytes.iter().map(|&b| b != 0).collect();
        let heightmap =
            Heightmap::new(width, height, pixel_pitch, gel_max_indentation, depths, mask)
                .map_err(|e| FormatError::Malformed(format!("{}: {e}", ctx("heightmap"))))?;
        let desc_len = r.u32(&ctx("descriptor length"))? as usize;
        if desc_len > 1 << 20 {
            return Err(FormatError::Malformed(ctx("descriptor length")).into());
        }
        let desc_values = r.f64s(desc_len, &ctx("descriptor"))?;
        let descriptor = Descriptor::from_values(desc_values)
            .map_err(|e| FormatError::Malformed(format!("{}: {e}", ctx("descriptor"))))?;
        let sensor_pose_world = r.transform(&ctx("pose"))?;
        let gripper_opening = r.f64(&ctx("opening"))?;
        let rebuilt = TactileMapEntry::new(
            image,
            heightmap,
            sensor_pose_world,
            gripper_opening,
            &intrinsics,
        )
        .map_err(|e| Error::from(FormatError::Malformed(format!("entry {i}: {e}"))))?;
        // Keep the stored descriptor verbatim (bit-exact round trip).
        let entry = TactileMapEntry {
            descriptor,
            ..rebuilt
        };
        entries.push(entry);
    }
    if r.pos != payload.len() {
        return Err(FormatError::Malformed(format!(
            "{} trailing bytes after last entry",
            payload.len() - r.pos
        ))
        .into());
    }
    TactileMap::new(object_id, intrinsics, entries)
}

fn write_transform(out: &mut Vec<u8>, t: &RigidTransform) {
    let r = t.rotation();
    for row in 0..3 {
        for col in 0..3 {
            out.extend_from_slice(&r[(row, col)].to_le_bytes());
        }
    }
    for k in 0..3 {
        out.extend_from_slice(&t.translation()[k].to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated(what.to_string()).into());
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(4 * n, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(8 * n, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn transform(&mut self, what: &str) -> Result<RigidTransform> {
        let vals = self.f64s(12, what)?;
        let rotation = Matrix3::new(
            vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6], vals[7], vals[8],
        );
        let translation = Vector3::new(vals[9], vals[10], vals[11]);
        RigidTransform::new(rotation, translation)
            .map_err(|e| FormatError::Malformed(format!("{what}: {e}")).into())
    }
}

#[cfg(test)]
mod tests {
    use std::path::PathBuf;

    use super::*;
    use crate::mapping::testutil::three_bump_map;

    fn temp_path(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("tacmap-map-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(format!("{tag}-{}.tmap", std::process::id()))
    }

    #[test]
    fn save_load_round_trips_bitwise() {
        let map = three_bump_map();
        let path = temp_path("roundtrip");
        save_map(&map, &path).unwrap();
        let loaded = load_map(&path).unwrap();
        assert_eq!(map, loaded);

        // Re-saving the loaded map reproduces the file byte for byte.
        let path2 = temp_path("roundtrip2");
        save_map(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        std::fs::remove_file(&path).unwrap();
        std::fs::remove_file(&path2).unwrap();
    }

    #[test]
    fn corrupted_files_are_rejected_with_the_right_error() {
        let map = three_bump_map();
        let path = temp_path("corrupt");
        save_map(&map, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let check = |bytes: Vec<u8>, expect: fn(&FormatError) -> bool| {
            std::fs::write(&path, bytes).unwrap();
            match load_map(&path) {
                Err(Error::Format(f)) if expect(&f) => {}
                other => panic!("expected a format error, got {other:?}"),
            }
        };

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        check(bad_magic, |f| matches!(f, FormatError::BadMagic));

        let mut bad_version = good.clone();
        bad_version[4] = 99;
        check(bad_version, |f| {
            matches!(f, FormatError::Version { found: 99, .. })
        });

        let mut flipped = good.clone();
        let mid = good.len() / 2;
        flipped[mid] ^= 0xff;
        check(flipped, |f| matches!(f, FormatError::Checksum { .. }));

        check(good[..8].to_vec(), |f| matches!(f, FormatError::Truncated(_)));

        // Truncating the payload breaks the checksum first; that is still a
        // loud failure, which is what matters.
        check(good[..good.len() - 10].to_vec(), |f| {
            matches!(f, FormatError::Checksum { .. } | FormatError::Truncated(_))
        });

        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn trailing_garbage_is_detected() {
        let map = three_bump_map();
        let path = temp_path("trailing");
        save_map(&map, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(&[0u8; 16]);
        std::fs::write(&path, &bytes).unwrap();
        match load_map(&path) {
            Err(Error::Format(FormatError::Checksum { .. })) => {}
            other => panic!("expected checksum failure, got {other:?}"),
        }
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn loading_a_missing_file_is_an_io_error() {
        let path = temp_path("missing-never-written");
        let _ = std::fs::remove_file(&path);
        assert!(matches!(load_map(&path), Err(Error::Io(_))));
    }
}
