//! Geodesic primitives and the trajectory data model.
//!
//! The earth is treated as a sphere of radius [`EARTH_RADIUS_M`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("timestamp {0} is not finite")]
    Timestamp(f64),
    #[error("time does not advance between points (dt = {0} s)")]
    NonIncreasingTime(f64),
    #[error("bearing undefined between coincident points")]
    CoincidentPoints,
    #[error("unknown transportation mode `{0}`")]
    UnknownMode(String),
}

/// One GPS fix. Coordinates are validated on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsPoint {
    lat: f64,
    lon: f64,
    t: f64,
}

impl GpsPoint {
    pub fn new(lat: f64, lon: f64, t: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Longitude(lon));
        }
        if !t.is_finite() {
            return Err(GeoError::Timestamp(t));
        }
        Ok(GpsPoint { lat, lon, t })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Seconds since the Unix epoch.
    pub fn t(&self) -> f64 {
        self.t
    }
}

/// Great-circle distance in meters.
pub fn haversine_distance(a: &GpsPoint, b: &GpsPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    // clamp guards against h creeping past 1 for antipodal pairs
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Speed in m/s from `a` to `b`.
pub fn point_speed(a: &GpsPoint, b: &GpsPoint) -> Result<f64, GeoError> {
    let dt = b.t - a.t;
    if dt <= 0.0 {
        return Err(GeoError::NonIncreasingTime(dt));
    }
    Ok(haversine_distance(a, b) / dt)
}

/// Initial great-circle bearing from `a` to `b` in degrees, 0 = north, 90 = east.
pub fn bearing(a: &GpsPoint, b: &GpsPoint) -> Result<f64, GeoError> {
    if a.lat == b.lat && a.lon == b.lon {
        return Err(GeoError::CoincidentPoints);
    }
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    let deg = y.atan2(x).to_degrees().rem_euclid(360.0);
    Ok(if deg >= 360.0 { 0.0 } else { deg })
}

/// Destination reached by travelling `distance_m` along `bearing_deg` from `start`.
pub fn destination(start: &GpsPoint, bearing_deg: f64, distance_m: f64, t: f64) -> Result<GpsPoint, GeoError> {
    let delta = distance_m / EARTH_RADIUS_M;
    let theta = bearing_deg.to_radians();
    let phi1 = start.lat.to_radians();
    let lambda1 = start.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).clamp(-1.0, 1.0).asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    let lon = (lambda2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    GpsPoint::new(phi2.to_degrees().clamp(-90.0, 90.0), lon, t)
}

/// Transportation modes appearing in either class set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Walk,
    Bike,
    Bus,
    Car,
    Train,
    Subway,
    Airplane,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Walk => "walk",
            Mode::Bike => "bike",
            Mode::Bus => "bus",
            Mode::Car => "car",
            Mode::Train => "train",
            Mode::Subway => "subway",
            Mode::Airplane => "airplane",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "walk" => Ok(Mode::Walk),
            "bike" => Ok(Mode::Bike),
            "bus" => Ok(Mode::Bus),
            "car" => Ok(Mode::Car),
            "train" => Ok(Mode::Train),
            "subway" => Ok(Mode::Subway),
            "airplane" => Ok(Mode::Airplane),
            other => Err(GeoError::UnknownMode(other.to_string())),
        }
    }
}

/// The active label enumeration. Class indices follow the listed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassSet {
    Four,
    Seven,
}

impl ClassSet {
    pub fn from_count(n: usize) -> Option<Self> {
        match n {
            4 => Some(ClassSet::Four),
            7 => Some(ClassSet::Seven),
            _ => None,
        }
    }

    pub fn modes(self) -> &'static [Mode] {
        match self {
            ClassSet::Four => &[Mode::Bike, Mode::Car, Mode::Walk, Mode::Bus],
            ClassSet::Seven => &[
                Mode::Train,
                Mode::Car,
                Mode::Walk,
                Mode::Bus,
                Mode::Subway,
                Mode::Airplane,
                Mode::Bike,
            ],
        }
    }

    pub fn len(self) -> usize {
        self.modes().len()
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn index_of(self, mode: Mode) -> Option<usize> {
        self.modes().iter().position(|&m| m == mode)
    }

    pub fn mode(self, index: usize) -> Mode {
        self.modes()[index]
    }

    /// Case-insensitive lookup restricted to this class set.
    pub fn parse(self, s: &str) -> Option<Mode> {
        s.parse::<Mode>().ok().filter(|m| self.index_of(*m).is_some())
    }
}

/// A time-ordered sequence of fixes for one person.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub person_id: String,
    points: Vec<GpsPoint>,
}

impl Trajectory {
    /// Fails if timestamps are not strictly increasing.
    pub fn new(person_id: impl Into<String>, points: Vec<GpsPoint>) -> Result<Self, GeoError> {
        for w in points.windows(2) {
            let dt = w[1].t - w[0].t;
            if dt <= 0.0 {
                return Err(GeoError::NonIncreasingTime(dt));
            }
        }
        Ok(Trajectory {
            person_id: person_id.into(),
            points,
        })
    }

    pub fn points(&self) -> &[GpsPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `[t_begin, t_end]`, if any points exist.
    pub fn time_span(&self) -> Option<(f64, f64)> {
        Some((self.points.first()?.t, self.points.last()?.t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: f64, lon: f64) -> GpsPoint {
        GpsPoint::new(lat, lon, 0.0).unwrap()
    }

    // Spherical law of cosines, an independent route to the same distance.
    fn cosine_law(a: &GpsPoint, b: &GpsPoint) -> f64 {
        let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
        let dl = (b.lon() - a.lon()).to_radians();
        let c = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0);
        EARTH_RADIUS_M * c.acos()
    }

    #[test]
    fn identical_points_are_zero_apart() {
        let a = p(39.9, 116.4);
        assert_eq!(haversine_distance(&a, &a), 0.0);
    }

    #[test]
    fn antipodal_on_equator() {
        let d = haversine_distance(&p(0.0, 0.0), &p(0.0, 180.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_M).abs() < 1e-6);
        assert!((d - 20_015_086.8).abs() < 1.0);
    }

    #[test]
    fn short_beijing_hop_matches_cosine_law() {
        let a = p(39.9042, 116.4074);
        let b = p(39.9052, 116.4074);
        let h = haversine_distance(&a, &b);
        let c = cosine_law(&a, &b);
        assert!(((h - c) / c).abs() < 1e-3, "{h} vs {c}");
    }

    #[test]
    fn speed_of_hundred_meters_in_ten_seconds() {
        let a = GpsPoint::new(0.0, 0.0, 0.0).unwrap();
        let b = destination(&a, 90.0, 100.0, 10.0).unwrap();
        let v = point_speed(&a, &b).unwrap();
        assert!((v - 10.0).abs() < 1e-9);
    }

    #[test]
    fn speed_rejects_equal_timestamps() {
        let a = GpsPoint::new(0.0, 0.0, 5.0).unwrap();
        let b = GpsPoint::new(0.001, 0.0, 5.0).unwrap();
        assert!(matches!(point_speed(&a, &b), Err(GeoError::NonIncreasingTime(_))));
    }

    #[test]
    fn cardinal_bearings() {
        assert!(bearing(&p(10.0, 20.0), &p(10.5, 20.0)).unwrap().abs() < 1e-9);
        assert!((bearing(&p(0.0, 0.0), &p(0.0, 1.0)).unwrap() - 90.0).abs() < 1e-9);
        assert!((bearing(&p(0.0, 0.0), &p(0.0, -1.0)).unwrap() - 270.0).abs() < 1e-9);
        assert!(matches!(bearing(&p(1.0, 1.0), &p(1.0, 1.0)), Err(GeoError::CoincidentPoints)));
    }

    #[test]
    fn construction_enforces_bounds() {
        assert!(GpsPoint::new(91.0, 0.0, 0.0).is_err());
        assert!(GpsPoint::new(0.0, -180.5, 0.0).is_err());
        assert!(GpsPoint::new(0.0, 0.0, f64::NAN).is_err());
        assert!(Trajectory::new("a", vec![p(0.0, 0.0), p(0.0, 0.0)]).is_err());
    }

    #[test]
    fn class_sets_parse_case_insensitively() {
        assert_eq!(ClassSet::Four.parse("BUS"), Some(Mode::Bus));
        assert_eq!(ClassSet::Four.parse("airplane"), None);
        assert_eq!(ClassSet::Seven.parse("Airplane"), Some(Mode::Airplane));
        assert_eq!(ClassSet::Four.index_of(Mode::Bike), Some(0));
    }

    fn arb_point() -> impl Strategy<Value = GpsPoint> {
        (-80.0..80.0f64, -179.0..179.0f64).prop_map(|(la, lo)| p(la, lo))
    }

    // Vector-based bearing: project the destination onto the local
    // east/north frame at the start point.
    fn vector_bearing(a: &GpsPoint, b: &GpsPoint) -> f64 {
        let v = |q: &GpsPoint| {
            let (la, lo) = (q.lat().to_radians(), q.lon().to_radians());
            [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
        };
        let (pa, pb) = (v(a), v(b));
        let (la, lo) = (a.lat().to_radians(), a.lon().to_radians());
        let east = [-lo.sin(), lo.cos(), 0.0];
        let north = [-la.sin() * lo.cos(), -la.sin() * lo.sin(), la.cos()];
        let d = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
        let e: f64 = (0..3).map(|i| d[i] * east[i]).sum();
        let n: f64 = (0..3).map(|i| d[i] * north[i]).sum();
        e.atan2(n).to_degrees().rem_euclid(360.0)
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in arb_point(), b in arb_point()) {
            prop_assert_eq!(haversine_distance(&a, &b), haversine_distance(&b, &a));
        }

        #[test]
        fn triangle_inequality(a in arb_point(), b in arb_point(), c in arb_point()) {
            let ab = haversine_distance(&a, &b);
            let bc = haversine_distance(&b, &c);
            let ac = haversine_distance(&a, &c);
            prop_assert!(ac <= (ab + bc) * (1.0 + 1e-9) + 1e-9);
        }

        #[test]
        fn doubling_dt_halves_speed(a in arb_point(), b in arb_point(), dt in 0.5..1000.0f64) {
            prop_assume!(haversine_distance(&a, &b) > 0.0);
            let a0 = GpsPoint::new(a.lat(), a.lon(), 0.0).unwrap();
            let b1 = GpsPoint::new(b.lat(), b.lon(), dt).unwrap();
            let b2 = GpsPoint::new(b.lat(), b.lon(), 2.0 * dt).unwrap();
            let v1 = point_speed(&a0, &b1).unwrap();
            let v2 = point_speed(&a0, &b2).unwrap();
            prop_assert_eq!(v1 / 2.0, v2);
            prop_assert!((v1 - cosine_law(&a, &b) / dt).abs() <= 1e-6 * v1.max(1.0));
        }

        #[test]
        fn bearing_matches_vector_oracle(a in arb_point(), b in arb_point()) {
            prop_assume!(haversine_distance(&a, &b) > 1.0);
            let got = bearing(&a, &b).unwrap();
            let want = vector_bearing(&a, &b);
            let diff = (got - want + 540.0).rem_euclid(360.0) - 180.0;
            prop_assert!(diff.abs() < 1e-6, "{} vs {}", got, want);
        }
    }
}
