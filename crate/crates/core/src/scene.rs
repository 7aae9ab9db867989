//! Multimodal scene records and the deterministic scene-to-text serializer.
//!
//! A record is one timestamped observation: transceiver GPS fixes, optional
//! camera/lidar captions, object detections, and an optional 4×64 received-
//! power matrix. Records travel as one JSON object per line (UTF-8) with a
//! versioned `schema` field; see the field names on [`SceneRecord`].
//!
//! `scene_to_text` fuses a record into one textual description whose bytes
//! are identical across runs and platforms for equal input — the knowledge
//! base depends on that stability.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_distance, initial_bearing, GeoPoint};
use crate::http::{JsonClient, RetryPolicy};

/// Wire schema version accepted by the parser.
pub const SCHEMA_VERSION: u32 = 1;

/// Number of phased arrays and beams per array in the power matrix.
pub const POWER_ARRAYS: usize = 4;
pub const POWER_BEAMS: usize = 64;

/// One object detection from an upstream vision model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "class")]
    pub class_name: String,
    pub confidence: f64,
    /// Normalized (x, y, w, h), each in [0, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

/// One timestamped multimodal observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub schema: u32,
    pub scene_id: String,
    pub timestamp_us: i64,
    pub gps_tx: GeoPoint,
    pub gps_rx: GeoPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lidar_caption: Option<String>,
    /// Reference handed to the annotation endpoint when a caption is missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detections: Vec<Detection>,
    /// Received power, exactly `POWER_ARRAYS` rows of `POWER_BEAMS` values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<Vec<Vec<f64>>>,
}

impl SceneRecord {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Validation {
                field: "schema".into(),
                message: format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema),
            });
        }
        if self.scene_id.is_empty() {
            return Err(Error::Validation {
                field: "scene_id".into(),
                message: "must be non-empty".into(),
            });
        }
        self.gps_tx.validate().map_err(|e| Error::Validation {
            field: "gps_tx".into(),
            message: e.to_string(),
        })?;
        self.gps_rx.validate().map_err(|e| Error::Validation {
            field: "gps_rx".into(),
            message: e.to_string(),
        })?;
        for det in &self.detections {
            if !det.confidence.is_finite() || !(0.0..=1.0).contains(&det.confidence) {
                return Err(Error::Validation {
                    field: "confidence".into(),
                    message: format!("{} outside [0, 1]", det.confidence),
                });
            }
            if let Some(bbox) = &det.bbox {
                if bbox.iter().any(|c| !c.is_finite() || !(0.0..=1.0).contains(c)) {
                    return Err(Error::Validation {
                        field: "bbox".into(),
                        message: "components must be within [0, 1]".into(),
                    });
                }
            }
        }
        if let Some(power) = &self.power {
            if power.len() != POWER_ARRAYS || power.iter().any(|row| row.len() != POWER_BEAMS) {
                return Err(Error::Validation {
                    field: "power".into(),
                    message: format!("must be exactly {POWER_ARRAYS}x{POWER_BEAMS}"),
                });
            }
            if power.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Validation {
                    field: "power".into(),
                    message: "contains a non-finite value".into(),
                });
            }
        }
        Ok(())
    }
}

/// Parses line-delimited scene records, validating each. Blank lines are
/// skipped; errors carry the 1-based line number and offending field.
pub fn parse_scene_records<R: BufRead>(reader: R) -> Result<Vec<SceneRecord>> {
    let mut records: Vec<SceneRecord> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SceneRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        record
            .validate()
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if !seen.insert(record.scene_id.clone()) {
            return Err(Error::DuplicateSceneId { line: line_no, scene_id: record.scene_id });
        }
        records.push(record);
    }
    Ok(records)
}

/// Serializes one record to its wire line (no trailing newline).
pub fn serialize_scene_record(record: &SceneRecord) -> Result<String> {
    serde_json::to_string(record).map_err(|e| Error::Format(e.to_string()))
}

/// Knobs for the serializer. The vehicle-class set decides which detections
/// count toward `vehicle_count`.
#[derive(Debug, Clone)]
pub struct SceneTextConfig {
    pub vehicle_classes: std::collections::BTreeSet<String>,
}

impl Default for SceneTextConfig {
    fn default() -> Self {
        Self {
            vehicle_classes: ["car", "truck", "bus", "motorcycle", "bicycle"]
                .into_iter()
                .map(str::to_string)
                .collect(),
        }
    }
}

/// Deterministic textual description of a scene, plus the derived quantities
/// embedded in it.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneText {
    pub scene_id: String,
    pub body: String,
    pub distance_km: f64,
    pub bearing_deg: f64,
    pub vehicle_count: usize,
    /// (array index in 0..4, beam index in 0..64) of the strongest beam.
    pub best_beam: Option<(usize, usize)>,
}

/// Fuses captions, detections, geodesy, and the power summary into one body.
///
/// Section order is fixed: camera caption (or the literal
/// "no camera description"), lidar caption when present, object census with
/// vehicle count, TX–RX distance (3 decimals), initial bearing TX→RX
/// (1 decimal; TX is treated as origin), altitudes when present, and the
/// per-array beam-power summary. Equal records produce byte-identical bodies.
pub fn scene_to_text(record: &SceneRecord, config: &SceneTextConfig) -> Result<SceneText> {
    record.validate()?;
    let distance_km = haversine_distance(&record.gps_tx, &record.gps_rx)?;
    let bearing_deg = initial_bearing(&record.gps_tx, &record.gps_rx)?;

    let mut census: BTreeMap<&str, usize> = BTreeMap::new();
    for det in &record.detections {
        *census.entry(det.class_name.as_str()).or_default() += 1;
    }
    let vehicle_count = record
        .detections
        .iter()
        .filter(|d| config.vehicle_classes.contains(&d.class_name))
        .count();

    let mut body = String::new();
    match &record.camera_caption {
        Some(caption) => body.push_str(caption),
        None => body.push_str("no camera description"),
    }
    body.push('\n');
    if let Some(caption) = &record.lidar_caption {
        body.push_str("lidar: ");
        body.push_str(caption);
        body.push('\n');
    }
    if census.is_empty() {
        body.push_str("objects: none\n");
    } else {
        let listing = census
            .iter()
            .map(|(class, count)| format!("{class}: {count}"))
            .collect::<Vec<_>>()
            .join(", ");
        body.push_str("objects: ");
        body.push_str(&listing);
        body.push('\n');
    }
    body.push_str(&format!("vehicle count: {vehicle_count}\n"));
    body.push_str(&format!("TX–RX distance: {distance_km:.3} km\n"));
    body.push_str(&format!("bearing TX→RX: {bearing_deg:.1}°\n"));
    if let Some(alt) = record.gps_tx.alt_m {
        body.push_str(&format!("TX altitude: {alt:.1} m\n"));
    }
    if let Some(alt) = record.gps_rx.alt_m {
        body.push_str(&format!("RX altitude: {alt:.1} m\n"));
    }

    let mut best_beam = None;
    if let Some(power) = &record.power {
        let mut global: Option<(f64, usize, usize)> = None;
        for (array_idx, row) in power.iter().enumerate() {
            // argmax, first index on ties
            let (beam_idx, &max_value) = row
                .iter()
                .enumerate()
                .max_by(|&(i, a), &(j, b)| a.partial_cmp(b).unwrap().then(j.cmp(&i)))
                .expect("power rows are non-empty");
            body.push_str(&format!(
                "array {array_idx}: max power {max_value:.6} at beam {beam_idx}\n"
            ));
            let better = match global {
                None => true,
                Some((best_value, _, _)) => max_value > best_value,
            };
            if better {
                global = Some((max_value, array_idx, beam_idx));
            }
        }
        if let Some((_, array_idx, beam_idx)) = global {
            body.push_str(&format!("best beam: array {array_idx}, beam {beam_idx}\n"));
            best_beam = Some((array_idx, beam_idx));
        }
    }

    Ok(SceneText {
        scene_id: record.scene_id.clone(),
        body,
        distance_km,
        bearing_deg,
        vehicle_count,
        best_beam,
    })
}

/// Client for a remote captioning endpoint: POST `{"image_ref"}`, response
/// `{"caption"}`.
pub struct AnnotationClient {
    url: String,
    api_key: Option<String>,
    client: JsonClient,
}

impl AnnotationClient {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Result<Self> {
        Self::with_policy(url, api_key, RetryPolicy::default())
    }

    pub fn with_policy(
        url: impl Into<String>,
        api_key: Option<String>,
        policy: RetryPolicy,
    ) -> Result<Self> {
        Ok(Self { url: url.into(), api_key, client: JsonClient::new(policy)? })
    }

    fn caption(&self, image_ref: &str) -> Result<String> {
        #[derive(Serialize)]
        struct Request<'a> {
            image_ref: &'a str,
        }
        #[derive(Deserialize)]
        struct Response {
            caption: String,
        }
        let value = self
            .client
            .post_json(&self.url, self.api_key.as_deref(), &Request { image_ref })?;
        let response: Response = serde_json::from_value(value)
            .map_err(|e| Error::Protocol(format!("caption response: {e}")))?;
        Ok(response.caption)
    }
}

/// Fills `camera_caption` from the annotation endpoint.
///
/// Pass-through cases return a plain copy: the record is already captioned,
/// or no endpoint is configured. Otherwise the record must carry an
/// `image_ref`. The input record is never modified.
pub fn annotate_scene(
    record: &SceneRecord,
    endpoint: Option<&AnnotationClient>,
) -> Result<SceneRecord> {
    let client = match endpoint {
        Some(client) if record.camera_caption.is_none() => client,
        _ => return Ok(record.clone()),
    };
    let image_ref = record.image_ref.as_deref().ok_or_else(|| Error::Validation {
        field: "image_ref".into(),
        message: "required to annotate a record without a camera_caption".into(),
    })?;
    let caption = client.caption(image_ref)?;
    let mut annotated = record.clone();
    annotated.camera_caption = Some(caption);
    Ok(annotated)
}
