use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tarstream::{c_string, parse_octal, RawEntry, TarEntries, BLOCK};
use super::{DepthGrid, SceneRecord, ShardError, ViewRecord};
use crate::depth::QuantileMethod;
use crate::preprocess::Intrinsics;

pub const MANIFEST_NAME: &str = "__manifest__.json";
const CHECKSUM_NAME: &str = "checksum.json";
const SHARD_FORMAT: &str = "condkit-shard";
const SHARD_VERSION: u32 = 1;

/// Contents of a scene's `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneMeta {
    pub scene_id: String,
    pub fov: f64,
    pub convention: String,
    pub source: String,
    pub num_views: usize,
    /// `[width, height]` of every depth grid, in view order.
    pub depth_shapes: Vec<[usize; 2]>,
    #[serde(default)]
    pub quantile: QuantileMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<Intrinsics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SceneChecksums {
    files: BTreeMap<String, u32>,
    /// CRC32 over every payload in entry order.
    scene: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene_id: String,
    /// Offset of the first header block of the scene's `meta.json`.
    pub offset: u64,
    /// Bytes from `offset` through the end of the scene's last entry.
    pub length: u64,
    pub num_views: usize,
    pub crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub shard_id: String,
    pub scene_count: usize,
    pub scenes: Vec<ManifestEntry>,
}

/// A shard on disk together with its manifest.
#[derive(Debug, Clone)]
pub struct Shard {
    pub path: PathBuf,
    pub shard_id: String,
    pub manifest: Manifest,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ShardError + '_ {
    move |source| ShardError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

fn scene_files(scene: &SceneRecord) -> Vec<(String, Vec<u8>)> {
    let meta = SceneMeta {
        scene_id: scene.scene_id.clone(),
        fov: scene.fov,
        convention: scene.convention.clone(),
        source: scene.source.clone(),
        num_views: scene.views.len(),
        depth_shapes: scene.views.iter().map(|v| [v.depth.width, v.depth.height]).collect(),
        quantile: scene.quantile,
        intrinsics: scene.intrinsics,
        content_scale: scene.content_scale,
    };
    let mut files = Vec::with_capacity(2 + 3 * scene.views.len());
    files.push(("meta.json".to_string(), serde_json::to_vec(&meta).expect("meta serializes")));
    let poses: Vec<u8> = scene
        .views
        .iter()
        .flat_map(|v| v.pose.iter().flat_map(|x| x.to_le_bytes()))
        .collect();
    files.push(("poses.bin".to_string(), poses));
    for (i, v) in scene.views.iter().enumerate() {
        let depth: Vec<u8> = v.depth.values.iter().flat_map(|x| x.to_le_bytes()).collect();
        files.push((format!("depth_{i:04}.f32"), depth));
        files.push((format!("mask_{i:04}.u8"), v.depth.mask.iter().map(|&m| m as u8).collect()));
        files.push((format!("image_{i:04}.png"), v.image_png.clone()));
    }
    files
}

fn checksums(files: &[(String, Vec<u8>)]) -> SceneChecksums {
    let mut scene = crc32fast::Hasher::new();
    let mut map = BTreeMap::new();
    for (name, data) in files {
        scene.update(data);
        map.insert(name.clone(), crc32fast::hash(data));
    }
    SceneChecksums {
        files: map,
        scene: scene.finalize(),
    }
}

struct CountingWriter<W> {
    inner: W,
    count: u64,
}

impl<W: Write> Write for CountingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.count += n as u64;
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn append<W: Write>(builder: &mut tar::Builder<W>, path: &str, data: &[u8]) -> io::Result<()> {
    let mut header = tar::Header::new_gnu();
    header.set_size(data.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_cksum();
    builder.append_data(&mut header, path, data)
}

/// Writes `scenes` to `destination` as one shard. The shard id is the file
/// stem of `destination`.
pub fn write_shard(scenes: &[SceneRecord], destination: &Path) -> Result<Shard, ShardError> {
    if scenes.is_empty() {
        return Err(ShardError::Empty);
    }
    let mut seen = std::collections::HashSet::new();
    for s in scenes {
        s.validate()?;
        if !seen.insert(s.scene_id.as_str()) {
            return Err(ShardError::InvalidScene {
                scene_id: s.scene_id.clone(),
                reason: "duplicate scene id within shard".into(),
            });
        }
    }
    let shard_id = shard_id_of(destination);
    let file = File::create(destination).map_err(io_err(destination))?;
    let mut builder = tar::Builder::new(CountingWriter {
        inner: BufWriter::new(file),
        count: 0,
    });
    let mut entries = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let offset = builder.get_ref().count;
        let files = scene_files(scene);
        let sums = checksums(&files);
        for (name, data) in &files {
            append(&mut builder, &format!("{}/{name}", scene.scene_id), data).map_err(io_err(destination))?;
        }
        let sums_json = serde_json::to_vec(&sums).expect("checksums serialize");
        append(&mut builder, &format!("{}/{CHECKSUM_NAME}", scene.scene_id), &sums_json)
            .map_err(io_err(destination))?;
        entries.push(ManifestEntry {
            scene_id: scene.scene_id.clone(),
            offset,
            length: builder.get_ref().count - offset,
            num_views: scene.views.len(),
            crc32: sums.scene,
        });
    }
    let manifest = Manifest {
        format: SHARD_FORMAT.to_string(),
        version: SHARD_VERSION,
        shard_id: shard_id.clone(),
        scene_count: entries.len(),
        scenes: entries,
    };
    let manifest_json = serde_json::to_vec(&manifest).expect("manifest serializes");
    append(&mut builder, MANIFEST_NAME, &manifest_json).map_err(io_err(destination))?;
    let mut writer = builder.into_inner().map_err(io_err(destination))?;
    writer.flush().map_err(io_err(destination))?;
    Ok(Shard {
        path: destination.to_path_buf(),
        shard_id,
        manifest,
    })
}

fn shard_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "shard".to_string())
}

/// Walks tar headers with seeks, without reading payloads, until the
/// manifest entry is found.
fn find_manifest(path: &Path) -> Result<Manifest, ShardError> {
    let format = |reason: String| ShardError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut file = File::open(path).map_err(io_err(path))?;
    let mut header = [0u8; BLOCK];
    let mut position = 0u64;
    loop {
        match file.read_exact(&mut header) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                return Err(format("manifest entry not found".into()))
            }
            Err(e) => return Err(io_err(path)(e)),
        }
        if header.iter().all(|&b| b == 0) {
            return Err(format("manifest entry not found".into()));
        }
        let size = parse_octal(&header[124..136]).map_err(|e| format(e.to_string()))?;
        let padded = size.div_ceil(BLOCK as u64) * BLOCK as u64;
        let name = c_string(&header[0..100]);
        if name == MANIFEST_NAME && matches!(header[156], b'0' | 0) {
            let mut data = vec![0u8; size as usize];
            file.read_exact(&mut data).map_err(io_err(path))?;
            let manifest: Manifest =
                serde_json::from_slice(&data).map_err(|e| format(format!("bad manifest: {e}")))?;
            if manifest.format != SHARD_FORMAT || manifest.version != SHARD_VERSION {
                return Err(format(format!(
                    "unsupported shard format {} v{}",
                    manifest.format, manifest.version
                )));
            }
            return Ok(manifest);
        }
        position += BLOCK as u64 + padded;
        file.seek(SeekFrom::Start(position)).map_err(io_err(path))?;
    }
}

impl Shard {
    pub fn open(path: &Path) -> Result<Self, ShardError> {
        let manifest = find_manifest(path)?;
        let bad = |reason: String| ShardError::Format {
            path: path.to_path_buf(),
            reason,
        };
        if manifest.scene_count != manifest.scenes.len() {
            return Err(bad(format!(
                "manifest lists {} scenes but reports {}",
                manifest.scenes.len(),
                manifest.scene_count
            )));
        }
        if manifest.scenes.windows(2).any(|w| w[1].offset <= w[0].offset) {
            return Err(bad("manifest offsets are not strictly increasing".into()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            shard_id: manifest.shard_id.clone(),
            manifest,
        })
    }

    /// Sequential reader over every scene.
    pub fn reader(&self) -> Result<ShardReader<BufReader<File>>, ShardError> {
        let file = File::open(&self.path).map_err(io_err(&self.path))?;
        Ok(ShardReader::new(BufReader::with_capacity(1 << 16, file), self.path.clone()))
    }

    /// Random access to one scene via its manifest offset.
    pub fn read_scene(&self, index: usize) -> Result<SceneRecord, ShardError> {
        let entry = self.manifest.scenes.get(index).ok_or_else(|| ShardError::Format {
            path: self.path.clone(),
            reason: format!("scene index {index} out of range ({} scenes)", self.manifest.scene_count),
        })?;
        let scene = read_scene_at(&self.path, entry.offset)?;
        if scene.scene_id != entry.scene_id {
            return Err(ShardError::Format {
                path: self.path.clone(),
                reason: format!(
                    "offset {} resolves to scene {:?}, manifest expects {:?}",
                    entry.offset, scene.scene_id, entry.scene_id
                ),
            });
        }
        Ok(scene)
    }

    pub fn len(&self) -> usize {
        self.manifest.scene_count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.scene_count == 0
    }
}

/// Reads the single scene whose first header starts at `offset`.
pub fn read_scene_at(path: &Path, offset: u64) -> Result<SceneRecord, ShardError> {
    let mut file = File::open(path).map_err(io_err(path))?;
    file.seek(SeekFrom::Start(offset)).map_err(io_err(path))?;
    let mut reader = ShardReader {
        entries: TarEntries::at(BufReader::new(file), offset),
        path: path.to_path_buf(),
        pending: None,
        finished: false,
    };
    reader.next().unwrap_or_else(|| {
        Err(ShardError::Format {
            path: path.to_path_buf(),
            reason: format!("no scene at offset {offset}"),
        })
    })
}

/// Forward-only scene reader; holds at most one scene's entries in memory.
///
/// Yields one item per scene. Checksum and validation failures are
/// reported for the affected scene and reading continues; I/O and tar
/// framing failures end the iteration.
pub struct ShardReader<R> {
    entries: TarEntries<R>,
    path: PathBuf,
    pending: Option<RawEntry>,
    finished: bool,
}

impl<R: Read> ShardReader<R> {
    pub fn new(reader: R, path: PathBuf) -> Self {
        Self {
            entries: TarEntries::new(reader),
            path,
            pending: None,
            finished: false,
        }
    }

    fn next_raw(&mut self) -> Option<io::Result<RawEntry>> {
        match self.pending.take() {
            Some(e) => Some(Ok(e)),
            None => self.entries.next(),
        }
    }

    fn terminal(&mut self, e: io::Error) -> Option<Result<SceneRecord, ShardError>> {
        self.finished = true;
        Some(Err(ShardError::IoFailure {
            path: self.path.clone(),
            source: e,
        }))
    }
}

fn split_path(path: &str) -> (&str, &str) {
    path.split_once('/').unwrap_or(("", path))
}

impl<R: Read> Iterator for ShardReader<R> {
    type Item = Result<SceneRecord, ShardError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let first = match self.next_raw()? {
            Ok(e) => e,
            Err(e) => return self.terminal(e),
        };
        if first.path == MANIFEST_NAME {
            self.finished = true;
            return None;
        }
        let scene_id = split_path(&first.path).0.to_string();
        let mut files: Vec<(String, Vec<u8>)> = vec![(split_path(&first.path).1.to_string(), first.data)];
        let mut sums: Option<Vec<u8>> = None;
        loop {
            match self.next_raw() {
                None => break,
                Some(Err(e)) => return self.terminal(e),
                Some(Ok(e)) => {
                    let (dir, name) = split_path(&e.path);
                    if dir != scene_id {
                        self.pending = Some(e);
                        break;
                    }
                    if name == CHECKSUM_NAME {
                        sums = Some(e.data);
                        break;
                    }
                    files.push((name.to_string(), e.data));
                }
            }
        }
        Some(decode_scene(&scene_id, files, sums))
    }
}

fn decode_scene(
    scene_id: &str,
    files: Vec<(String, Vec<u8>)>,
    sums: Option<Vec<u8>>,
) -> Result<SceneRecord, ShardError> {
    let invalid = |reason: String| ShardError::InvalidScene {
        scene_id: scene_id.to_string(),
        reason,
    };
    let mismatch = |file: &str| ShardError::ChecksumMismatch {
        scene_id: scene_id.to_string(),
        file: file.to_string(),
    };
    let sums = sums.ok_or_else(|| invalid("scene has no checksum entry".into()))?;
    let sums: SceneChecksums = serde_json::from_slice(&sums).map_err(|_| mismatch(CHECKSUM_NAME))?;
    let mut scene_crc = crc32fast::Hasher::new();
    for (name, data) in &files {
        scene_crc.update(data);
        match sums.files.get(name) {
            Some(&crc) if crc == crc32fast::hash(data) => {}
            _ => return Err(mismatch(name)),
        }
    }
    if sums.files.len() != files.len() {
        return Err(invalid("scene entries do not match its checksum list".into()));
    }
    if scene_crc.finalize() != sums.scene {
        return Err(mismatch(CHECKSUM_NAME));
    }
    decode_files(scene_id, files.into_iter().collect())
}

fn decode_files(scene_id: &str, mut files: BTreeMap<String, Vec<u8>>) -> Result<SceneRecord, ShardError> {
    let invalid = |reason: String| ShardError::InvalidScene {
        scene_id: scene_id.to_string(),
        reason,
    };
    let meta = files.remove("meta.json").ok_or_else(|| invalid("missing meta.json".into()))?;
    let meta: SceneMeta = serde_json::from_slice(&meta).map_err(|e| invalid(format!("bad meta.json: {e}")))?;
    if meta.scene_id != scene_id {
        return Err(invalid(format!("meta.json names scene {:?}", meta.scene_id)));
    }
    if meta.depth_shapes.len() != meta.num_views {
        return Err(invalid("depth_shapes length differs from num_views".into()));
    }
    let poses = files.remove("poses.bin").ok_or_else(|| invalid("missing poses.bin".into()))?;
    if poses.len() != meta.num_views * 64 {
        return Err(invalid(format!(
            "poses.bin holds {} bytes, expected {}",
            poses.len(),
            meta.num_views * 64
        )));
    }
    let mut views = Vec::with_capacity(meta.num_views);
    for (i, [w, h]) in meta.depth_shapes.iter().copied().enumerate() {
        let mut pose = [0f32; 16];
        for (k, chunk) in poses[i * 64..(i + 1) * 64].chunks_exact(4).enumerate() {
            pose[k] = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        let depth = files
            .remove(&format!("depth_{i:04}.f32"))
            .ok_or_else(|| invalid(format!("view {i}: missing depth")))?;
        let mask = files
            .remove(&format!("mask_{i:04}.u8"))
            .ok_or_else(|| invalid(format!("view {i}: missing mask")))?;
        if depth.len() != w * h * 4 || mask.len() != w * h {
            return Err(invalid(format!("view {i}: depth or mask size disagrees with {w}x{h}")));
        }
        if mask.iter().any(|&m| m > 1) {
            return Err(invalid(format!("view {i}: mask bytes must be 0 or 1")));
        }
        let image_png = files.remove(&format!("image_{i:04}.png")).unwrap_or_default();
        views.push(ViewRecord {
            image_png,
            depth: DepthGrid {
                width: w,
                height: h,
                values: depth
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                mask: mask.iter().map(|&m| m == 1).collect(),
            },
            pose,
        });
    }
    if let Some(extra) = files.keys().next() {
        return Err(invalid(format!("unexpected entry {extra:?}")));
    }
    let record = SceneRecord {
        scene_id: meta.scene_id,
        source: meta.source,
        convention: meta.convention,
        fov: meta.fov,
        intrinsics: meta.intrinsics,
        content_scale: meta.content_scale,
        quantile: meta.quantile,
        views,
    };
    record.validate()?;
    Ok(record)
}

/// Writes a scene as a plain directory using the same file layout as inside
/// a shard. `dir` is the scene directory itself.
pub fn write_scene_dir(scene: &SceneRecord, dir: &Path) -> Result<(), ShardError> {
    scene.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (name, data) in scene_files(scene) {
        let path = dir.join(name);
        fs::write(&path, data).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Reads a scene directory in the shard file layout. Image files are
/// optional; a stray `checksum.json` is ignored.
pub fn ingest_scene_dir(dir: &Path) -> Result<SceneRecord, ShardError> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == CHECKSUM_NAME || name.starts_with('.') {
            continue;
        }
        files.insert(name, fs::read(&path).map_err(io_err(&path))?);
    }
    let meta: SceneMeta = files
        .get("meta.json")
        .ok_or_else(|| ShardError::InvalidScene {
            scene_id: dir.display().to_string(),
            reason: "missing meta.json".into(),
        })
        .and_then(|m| {
            serde_json::from_slice(m).map_err(|e| ShardError::InvalidScene {
                scene_id: dir.display().to_string(),
                reason: format!("bad meta.json: {e}"),
            })
        })?;
    decode_files(&meta.scene_id, files)
}

/// Packs every scene directory under `input` (sorted by name) into shards
/// of at most `scenes_per_shard` scenes, named `shard-NNNNNN.tar`.
pub fn build_shards(input: &Path, out: &Path, scenes_per_shard: usize) -> Result<Vec<Shard>, ShardError> {
    if scenes_per_shard == 0 {
        return Err(ShardError::Format {
            path: out.to_path_buf(),
            reason: "scenes per shard must be positive".into(),
        });
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(input)
        .map_err(io_err(input))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(ShardError::Empty);
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut shards = Vec::new();
    for (n, chunk) in dirs.chunks(scenes_per_shard).enumerate() {
        let scenes = chunk
            .iter()
            .map(|d| ingest_scene_dir(d))
            .collect::<Result<Vec<_>, _>>()?;
        shards.push(write_shard(&scenes, &out.join(format!("shard-{n:06}.tar")))?);
    }
    Ok(shards)
}
