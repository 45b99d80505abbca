//! Trip-request ingestion, grid snapping, and travel-metric providers.
//!
//! A [`TravelMetric`] answers pairwise driving-distance (km) and driving-time
//! (minutes) queries. Two providers are built in: a haversine metric with a
//! circuity factor (the default, since no routing engine is available
//! offline) and a precomputed landmark matrix loaded from a text file.

use std::fs::File;
use std::path::Path;
use std::sync::Mutex;

use chrono::NaiveDateTime;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;
pub const KM_PER_MILE: f64 = 1.609_344;

/// Meters per degree of latitude (and of longitude at the equator).
const METERS_PER_DEGREE: f64 = 111_320.0;

/// Epoch used for synthetic request times: 2013-01-01 00:00:00.
const SYNTH_EPOCH: i64 = 1_356_998_400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() || lat.abs() > 90.0 || lon.abs() > 180.0 {
            return Err(Error::BadCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }
}

/// One rider's request: where from, where to, and when.
///
/// `recorded_distance` (km) and `recorded_time` (minutes) carry the values
/// logged in the source dataset, when present; all matching math uses a
/// [`TravelMetric`] instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRequest {
    pub id: u64,
    pub source: GeoPoint,
    pub dest: GeoPoint,
    /// Seconds since the Unix epoch, parsed without timezone math.
    pub request_time: i64,
    pub recorded_distance: Option<f64>,
    pub recorded_time: Option<f64>,
}

/// Pairwise driving distance and time. Implementations must be
/// deterministic, return finite non-negative values, and give zero for
/// identical points. Queries may be issued concurrently.
pub trait TravelMetric: Send + Sync {
    /// Driving distance in km.
    fn dist(&self, from: GeoPoint, to: GeoPoint) -> f64;
    /// Driving time in minutes.
    fn time(&self, from: GeoPoint, to: GeoPoint) -> f64;
    /// Both at once; providers override this when one computation yields both.
    fn leg(&self, from: GeoPoint, to: GeoPoint) -> (f64, f64) {
        (self.dist(from, to), self.time(from, to))
    }
}

pub fn great_circle_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    EARTH_RADIUS_KM * 2.0 * h.sqrt().min(1.0).asin()
}

/// Great-circle distance scaled by a circuity factor, at constant speed.
#[derive(Debug, Clone)]
pub struct HaversineMetric {
    speed_kmh: f64,
    circuity: f64,
}

impl HaversineMetric {
    pub fn new(speed_kmh: f64, circuity: f64) -> Result<Self> {
        if !(speed_kmh > 0.0) || !speed_kmh.is_finite() {
            return Err(Error::BadParam(format!(
                "speed must be positive, got {speed_kmh}"
            )));
        }
        if !(circuity >= 1.0) || !circuity.is_finite() {
            return Err(Error::BadParam(format!(
                "circuity factor must be >= 1, got {circuity}"
            )));
        }
        Ok(Self { speed_kmh, circuity })
    }
}

impl TravelMetric for HaversineMetric {
    fn dist(&self, from: GeoPoint, to: GeoPoint) -> f64 {
        self.circuity * great_circle_km(from, to)
    }

    fn time(&self, from: GeoPoint, to: GeoPoint) -> f64 {
        self.dist(from, to) / self.speed_kmh * 60.0
    }

    fn leg(&self, from: GeoPoint, to: GeoPoint) -> (f64, f64) {
        let d = self.circuity * great_circle_km(from, to);
        (d, d / self.speed_kmh * 60.0)
    }
}

/// Square grid over a bounding box; points snap to the centroid of their
/// containing cell. Cells are half-open (lower/left edges inclusive), so the
/// snap is a deterministic quotient map and idempotent.
#[derive(Debug, Clone)]
pub struct LandmarkGrid {
    min: GeoPoint,
    lat_step: f64,
    lon_step: f64,
    rows: i64,
    cols: i64,
}

impl LandmarkGrid {
    pub fn new(cell_size_m: f64, min: GeoPoint, max: GeoPoint) -> Result<Self> {
        if !(cell_size_m > 0.0) || !cell_size_m.is_finite() {
            return Err(Error::BadCellSize(cell_size_m));
        }
        if !(max.lat > min.lat) || !(max.lon > min.lon) {
            return Err(Error::DegenerateBox);
        }
        let mid_lat = 0.5 * (min.lat + max.lat);
        let lat_step = cell_size_m / METERS_PER_DEGREE;
        let lon_step = cell_size_m / (METERS_PER_DEGREE * mid_lat.to_radians().cos());
        let rows = (((max.lat - min.lat) / lat_step).ceil() as i64).max(1);
        let cols = (((max.lon - min.lon) / lon_step).ceil() as i64).max(1);
        Ok(Self { min, lat_step, lon_step, rows, cols })
    }

    pub fn snap(&self, p: GeoPoint) -> GeoPoint {
        let i = (((p.lat - self.min.lat) / self.lat_step).floor() as i64).clamp(0, self.rows - 1);
        let j = (((p.lon - self.min.lon) / self.lon_step).floor() as i64).clamp(0, self.cols - 1);
        GeoPoint {
            lat: self.min.lat + (i as f64 + 0.5) * self.lat_step,
            lon: self.min.lon + (j as f64 + 0.5) * self.lon_step,
        }
    }
}

/// Precomputed inter-landmark distance/time tables. Queries snap to the
/// nearest labeled point (great-circle, ties to the lower index) and read the
/// table; diagonal entries are forced to zero.
pub struct MatrixMetric {
    points: Vec<GeoPoint>,
    dist_km: Vec<f64>,
    time_min: Vec<f64>,
}

impl MatrixMetric {
    /// Text format: point count `m`, then `m` lines `label lat lon`, then an
    /// `m` x `m` block of km values, then an `m` x `m` block of minutes,
    /// whitespace-separated.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::BadMatrix(msg.to_string());
        let mut tokens = text.split_whitespace();
        let m: usize = tokens
            .next()
            .ok_or_else(|| bad("missing point count"))?
            .parse()
            .map_err(|_| bad("point count is not an integer"))?;
        if m == 0 {
            return Err(bad("point count must be at least 1"));
        }
        let mut points = Vec::with_capacity(m);
        for _ in 0..m {
            let _label = tokens.next().ok_or_else(|| bad("missing point label"))?;
            let lat: f64 = tokens
                .next()
                .ok_or_else(|| bad("missing latitude"))?
                .parse()
                .map_err(|_| bad("latitude is not a number"))?;
            let lon: f64 = tokens
                .next()
                .ok_or_else(|| bad("missing longitude"))?
                .parse()
                .map_err(|_| bad("longitude is not a number"))?;
            points.push(GeoPoint::new(lat, lon)?);
        }
        let mut read_block = |name: &str| -> Result<Vec<f64>> {
            let mut block = Vec::with_capacity(m * m);
            for _ in 0..m * m {
                let v: f64 = tokens
                    .next()
                    .ok_or_else(|| bad(&format!("{name} matrix is not {m}x{m}")))?
                    .parse()
                    .map_err(|_| bad(&format!("{name} matrix entry is not a number")))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(bad(&format!("{name} matrix entry is negative or non-finite")));
                }
                block.push(v);
            }
            Ok(block)
        };
        let mut dist_km = read_block("distance")?;
        let mut time_min = read_block("time")?;
        if tokens.next().is_some() {
            return Err(bad("trailing data after the time matrix"));
        }
        for i in 0..m {
            dist_km[i * m + i] = 0.0;
            time_min[i * m + i] = 0.0;
        }
        Ok(Self { points, dist_km, time_min })
    }

    fn nearest(&self, p: GeoPoint) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (idx, &q) in self.points.iter().enumerate() {
            let d = great_circle_km(p, q);
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        best
    }
}

impl TravelMetric for MatrixMetric {
    fn dist(&self, from: GeoPoint, to: GeoPoint) -> f64 {
        let m = self.points.len();
        self.dist_km[self.nearest(from) * m + self.nearest(to)]
    }

    fn time(&self, from: GeoPoint, to: GeoPoint) -> f64 {
        let m = self.points.len();
        self.time_min[self.nearest(from) * m + self.nearest(to)]
    }

    fn leg(&self, from: GeoPoint, to: GeoPoint) -> (f64, f64) {
        let m = self.points.len();
        let k = self.nearest(from) * m + self.nearest(to);
        (self.dist_km[k], self.time_min[k])
    }
}

/// Memoizing wrapper around another metric. Route enumeration revisits the
/// same handful of legs many times per user set; this keeps each underlying
/// query to one evaluation without changing any returned value.
pub struct LegCache<'a> {
    inner: &'a dyn TravelMetric,
    cache: Mutex<std::collections::HashMap<(u64, u64, u64, u64), (f64, f64)>>,
}

impl<'a> LegCache<'a> {
    pub fn new(inner: &'a dyn TravelMetric) -> Self {
        Self { inner, cache: Mutex::new(std::collections::HashMap::new()) }
    }

    fn key(from: GeoPoint, to: GeoPoint) -> (u64, u64, u64, u64) {
        (
            from.lat.to_bits(),
            from.lon.to_bits(),
            to.lat.to_bits(),
            to.lon.to_bits(),
        )
    }
}

impl TravelMetric for LegCache<'_> {
    fn dist(&self, from: GeoPoint, to: GeoPoint) -> f64 {
        self.leg(from, to).0
    }

    fn time(&self, from: GeoPoint, to: GeoPoint) -> f64 {
        self.leg(from, to).1
    }

    fn leg(&self, from: GeoPoint, to: GeoPoint) -> (f64, f64) {
        let key = Self::key(from, to);
        let mut cache = self.cache.lock().unwrap();
        *cache.entry(key).or_insert_with(|| self.inner.leg(from, to))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceUnit {
    Km,
    Miles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Minutes,
    Seconds,
}

/// Column-name mapping for trip CSVs. The default matches the 2013 NYC taxi
/// trip schema (distances in miles, trip time in seconds); recorded values
/// are converted to km/minutes on load.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub pickup_lat: String,
    pub pickup_lon: String,
    pub dropoff_lat: String,
    pub dropoff_lon: String,
    pub pickup_datetime: String,
    /// Optional: set to `None` for files without a recorded distance.
    pub trip_distance: Option<String>,
    pub trip_time: Option<String>,
    pub distance_unit: DistanceUnit,
    pub time_unit: TimeUnit,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            pickup_lat: "pickup_latitude".into(),
            pickup_lon: "pickup_longitude".into(),
            dropoff_lat: "dropoff_latitude".into(),
            dropoff_lon: "dropoff_longitude".into(),
            pickup_datetime: "pickup_datetime".into(),
            trip_distance: Some("trip_distance".into()),
            trip_time: Some("trip_time_in_secs".into()),
            distance_unit: DistanceUnit::Miles,
            time_unit: TimeUnit::Seconds,
        }
    }
}

#[derive(Debug)]
pub struct LoadedTrips {
    pub trips: Vec<TripRequest>,
    pub skipped: usize,
}

pub fn parse_request_time(s: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(s.trim(), "%Y-%m-%d %H:%M:%S")
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

pub fn format_request_time(t: i64) -> String {
    chrono::DateTime::from_timestamp(t, 0)
        .map(|dt| dt.naive_utc().format("%Y-%m-%d %H:%M:%S").to_string())
        .unwrap_or_default()
}

/// Load trip requests from a CSV file. Ids are assigned in row order
/// starting at 0; rows that fail to parse or violate basic sanity
/// (coordinates out of range, pickup equal to dropoff, non-positive recorded
/// values) are counted and skipped. A file with data rows but no valid ones
/// is an error; an empty file yields an empty list.
pub fn load_trips(path: &Path, schema: &CsvSchema) -> Result<LoadedTrips> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::BadParam(format!("cannot read CSV header: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let c_plat = col(&schema.pickup_lat)?;
    let c_plon = col(&schema.pickup_lon)?;
    let c_dlat = col(&schema.dropoff_lat)?;
    let c_dlon = col(&schema.dropoff_lon)?;
    let c_time = col(&schema.pickup_datetime)?;
    let c_dist = schema.trip_distance.as_deref().map(col).transpose()?;
    let c_dur = schema.trip_time.as_deref().map(col).transpose()?;

    let dist_to_km = match schema.distance_unit {
        DistanceUnit::Km => 1.0,
        DistanceUnit::Miles => KM_PER_MILE,
    };
    let time_to_min = match schema.time_unit {
        TimeUnit::Minutes => 1.0,
        TimeUnit::Seconds => 1.0 / 60.0,
    };

    let mut trips = Vec::new();
    let mut skipped = 0usize;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                rows += 1;
                skipped += 1;
                continue;
            }
        };
        rows += 1;
        match parse_row(&record, c_plat, c_plon, c_dlat, c_dlon, c_time, c_dist, c_dur, dist_to_km, time_to_min) {
            Some(mut trip) => {
                trip.id = trips.len() as u64;
                trips.push(trip);
            }
            None => skipped += 1,
        }
    }

    if rows > 0 && trips.is_empty() {
        return Err(Error::NoValidRows { skipped });
    }
    Ok(LoadedTrips { trips, skipped })
}

#[allow(clippy::too_many_arguments)]
fn parse_row(
    record: &csv::StringRecord,
    c_plat: usize,
    c_plon: usize,
    c_dlat: usize,
    c_dlon: usize,
    c_time: usize,
    c_dist: Option<usize>,
    c_dur: Option<usize>,
    dist_to_km: f64,
    time_to_min: f64,
) -> Option<TripRequest> {
    let num = |i: usize| record.get(i).and_then(|s| s.parse::<f64>().ok());
    let source = GeoPoint::new(num(c_plat)?, num(c_plon)?).ok()?;
    let dest = GeoPoint::new(num(c_dlat)?, num(c_dlon)?).ok()?;
    if source == dest {
        return None;
    }
    let request_time = parse_request_time(record.get(c_time)?)?;
    // Empty optional cells mean "not recorded"; non-positive values are bad rows.
    let optional = |ci: Option<usize>, factor: f64| -> Option<Option<f64>> {
        match ci {
            None => Some(None),
            Some(i) => {
                let cell = record.get(i)?;
                if cell.is_empty() {
                    return Some(None);
                }
                let v: f64 = cell.parse().ok()?;
                if !v.is_finite() || v <= 0.0 {
                    return None;
                }
                Some(Some(v * factor))
            }
        }
    };
    let recorded_distance = optional(c_dist, dist_to_km)?;
    let recorded_time = optional(c_dur, time_to_min)?;
    Some(TripRequest {
        id: 0,
        source,
        dest,
        request_time,
        recorded_distance,
        recorded_time,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BoundingBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

impl BoundingBox {
    pub fn new(min: GeoPoint, max: GeoPoint) -> Result<Self> {
        if !(max.lat > min.lat) || !(max.lon > min.lon) {
            return Err(Error::DegenerateBox);
        }
        Ok(Self { min, max })
    }
}

/// Generate `n` synthetic requests with endpoints uniform in `bbox` and
/// request times uniform over `horizon_min` minutes. Fully reproducible
/// from the seed.
pub fn synth_generate(
    n: usize,
    seed: u64,
    bbox: &BoundingBox,
    horizon_min: f64,
) -> Result<Vec<TripRequest>> {
    if n < 1 {
        return Err(Error::BadParam("need at least one trip".into()));
    }
    if !(horizon_min > 0.0) {
        return Err(Error::BadParam("horizon must be positive".into()));
    }
    BoundingBox::new(bbox.min, bbox.max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| GeoPoint {
        lat: rng.random_range(bbox.min.lat..bbox.max.lat),
        lon: rng.random_range(bbox.min.lon..bbox.max.lon),
    };
    let mut trips = Vec::with_capacity(n);
    for id in 0..n {
        let source = point(&mut rng);
        let mut dest = point(&mut rng);
        while dest == source {
            dest = point(&mut rng);
        }
        let offset = rng.random_range(0.0..horizon_min * 60.0) as i64;
        trips.push(TripRequest {
            id: id as u64,
            source,
            dest,
            request_time: SYNTH_EPOCH + offset,
            recorded_distance: None,
            recorded_time: None,
        });
    }
    Ok(trips)
}
