//! Sites, annual-maxima datasets and their delimited-text format.
//!
//! Two files describe one dataset:
//!
//! * a sites file with header `id,lat,lon,alt` and one row per site;
//! * a values file with header `year,<site id>,...` and one row per year.
//!
//! Lines starting with `#` are comments and are skipped on input.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
    /// Normalized coordinates in [0, 1]; NaN until [`normalize_coords`] runs.
    pub norm_lat: f64,
    pub norm_lon: f64,
    pub norm_alt: f64,
}

impl Site {
    pub fn new(id: impl Into<String>, lat: f64, lon: f64, alt: f64) -> Self {
        Site {
            id: id.into(),
            lat,
            lon,
            alt,
            norm_lat: f64::NAN,
            norm_lon: f64::NAN,
            norm_alt: f64::NAN,
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.norm_lat.is_finite() && self.norm_lon.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min: f64,
    pub max: f64,
}

impl Extent {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        let mut e = Extent { min: f64::INFINITY, max: f64::NEG_INFINITY };
        for v in values {
            e.min = e.min.min(v);
            e.max = e.max.max(v);
        }
        (e.max > e.min).then_some(e)
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }
}

/// Min/max constants of an affine map of coordinates onto [0, 1].
///
/// Altitude is only normalized when it varies across the sites; otherwise
/// `norm_alt` is set to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordNormalizer {
    pub lat: Extent,
    pub lon: Extent,
    pub alt: Option<Extent>,
}

impl CoordNormalizer {
    pub fn fit(sites: &[Site]) -> Result<Self> {
        let lat = Extent::of(sites.iter().map(|s| s.lat)).ok_or(Error::DegenerateExtent("latitude"))?;
        let lon = Extent::of(sites.iter().map(|s| s.lon)).ok_or(Error::DegenerateExtent("longitude"))?;
        let alt = Extent::of(sites.iter().map(|s| s.alt));
        Ok(CoordNormalizer { lat, lon, alt })
    }

    pub fn apply(&self, site: &Site) -> Site {
        Site {
            norm_lat: self.lat.apply(site.lat),
            norm_lon: self.lon.apply(site.lon),
            norm_alt: self.alt.map_or(0.0, |e| e.apply(site.alt)),
            ..site.clone()
        }
    }
}

/// Rescales latitude, longitude and altitude onto [0, 1] by min/max.
pub fn normalize_coords(sites: &[Site]) -> Result<(Vec<Site>, CoordNormalizer)> {
    let normalizer = CoordNormalizer::fit(sites)?;
    Ok((sites.iter().map(|s| normalizer.apply(s)).collect(), normalizer))
}

/// Annual maxima for one source, stored years × sites in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub label: String,
    sites: Vec<Site>,
    years: Vec<i32>,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(label: impl Into<String>, sites: Vec<Site>, years: Vec<i32>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != years.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} value rows for {} years",
                rows.len(),
                years.len()
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * sites.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != sites.len() {
                return Err(Error::DimensionMismatch(format!(
                    "row {r} has {} values for {} sites",
                    row.len(),
                    sites.len()
                )));
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("non-finite value at year index {r}, site {}", sites[c].id)));
            }
            values.extend_from_slice(row);
        }
        Ok(Dataset { label: label.into(), sites, years, values })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn value(&self, year_idx: usize, site_idx: usize) -> f64 {
        self.values[year_idx * self.sites.len() + site_idx]
    }

    pub fn row(&self, year_idx: usize) -> &[f64] {
        let k = self.sites.len();
        &self.values[year_idx * k..(year_idx + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_years()).map(move |y| self.row(y))
    }

    pub fn column(&self, site_idx: usize) -> Vec<f64> {
        (0..self.n_years()).map(|y| self.value(y, site_idx)).collect()
    }

    /// New dataset made of the given year rows, in order (repeats allowed).
    pub fn select_years(&self, indices: &[usize]) -> Dataset {
        let k = self.sites.len();
        let mut values = Vec::with_capacity(indices.len() * k);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            label: self.label.clone(),
            sites: self.sites.clone(),
            years: indices.iter().map(|&i| self.years[i]).collect(),
            values,
        }
    }

    /// Reorders the site columns; `order[j]` is the old index of new site `j`.
    pub fn permute_sites(&self, order: &[usize]) -> Dataset {
        let rows = self.rows().map(|r| order.iter().map(|&j| r[j]).collect()).collect();
        Dataset {
            label: self.label.clone(),
            sites: order.iter().map(|&j| self.sites[j].clone()).collect(),
            years: self.years.clone(),
            values: rows_flat(rows),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_sites(mut self, sites: Vec<Site>) -> Result<Self> {
        if sites.len() != self.sites.len() {
            return Err(Error::DimensionMismatch("site count changed".into()));
        }
        self.sites = sites;
        Ok(self)
    }

    /// Maps every value through `f(site_idx, value)`.
    pub fn map_values(&self, mut f: impl FnMut(usize, f64) -> Result<f64>) -> Result<Dataset> {
        let k = self.sites.len();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i % k, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { values, ..self.clone() })
    }

    /// Checks the precipitation-specific constraints applied at ingestion.
    pub fn validate_nonnegative(&self) -> Result<()> {
        for (y, row) in self.rows().enumerate() {
            if let Some(s) = row.iter().position(|&v| v < 0.0) {
                return Err(Error::Schema(format!(
                    "negative value {} at year {}, site {}",
                    row[s], self.years[y], self.sites[s].id
                )));
            }
        }
        Ok(())
    }

    pub fn same_sites(&self, other: &Dataset) -> bool {
        self.sites.len() == other.sites.len()
            && self.sites.iter().zip(&other.sites).all(|(a, b)| a.id == b.id)
    }
}

fn rows_flat(rows: Vec<Vec<f64>>) -> Vec<f64> {
    rows.into_iter().flatten().collect()
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

fn parse_cell(record: &csv::StringRecord, col: usize, what: &str) -> Result<f64> {
    let line = record.position().map_or(0, |p| p.line());
    let raw = record
        .get(col)
        .ok_or_else(|| Error::Schema(format!("line {line}, column {}: missing {what}", col + 1)))?;
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::Schema(format!("line {line}, column {}: cannot parse {what} '{raw}'", col + 1)))?;
    if !v.is_finite() {
        return Err(Error::Schema(format!("line {line}, column {}: non-finite {what}", col + 1)));
    }
    Ok(v)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Schema(e.to_string())
}

pub fn read_sites<R: Read>(input: R) -> Result<Vec<Site>> {
    let mut rdr = csv_reader(input);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_lowercase).collect();
    if header.len() < 4 || header[..4] != ["id", "lat", "lon", "alt"] {
        return Err(Error::Schema(format!(
            "sites header must start with id,lat,lon,alt; found {}",
            header.join(",")
        )));
    }
    let mut sites = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Schema(format!("line {line}, column 1: empty site id")));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Schema(format!("line {line}: duplicate site id '{id}'")));
        }
        sites.push(Site::new(
            id,
            parse_cell(&rec, 1, "latitude")?,
            parse_cell(&rec, 2, "longitude")?,
            parse_cell(&rec, 3, "altitude")?,
        ));
    }
    if sites.is_empty() {
        return Err(Error::Schema("sites file has no rows".into()));
    }
    Ok(sites)
}

/// Reads a values table; columns are matched to `sites` by id and
/// reordered to the sites order.
pub fn read_values<R: Read>(input: R, sites: Vec<Site>, label: &str) -> Result<Dataset> {
    let mut rdr = csv_reader(input);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header.first().map(|h| h.to_lowercase()) != Some("year".into()) {
        return Err(Error::Schema("values header must start with 'year'".into()));
    }
    let mut column_of: HashMap<&str, usize> = HashMap::new();
    for (c, id) in header.iter().enumerate().skip(1) {
        if column_of.insert(id.as_str(), c).is_some() {
            return Err(Error::Schema(format!("values header: duplicate site id '{id}'")));
        }
        if !sites.iter().any(|s| &s.id == id) {
            return Err(Error::Schema(format!("values header: site id '{id}' not in sites file")));
        }
    }
    let cols = sites
        .iter()
        .map(|s| {
            column_of
                .get(s.id.as_str())
                .copied()
                .ok_or_else(|| Error::Schema(format!("values header: missing site id '{}'", s.id)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut years = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Schema(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                rec.len()
            )));
        }
        let raw_year = rec.get(0).unwrap_or("");
        let year: i32 = raw_year
            .parse()
            .map_err(|_| Error::Schema(format!("line {line}, column 1: cannot parse year '{raw_year}'")))?;
        if !seen.insert(year) {
            return Err(Error::Schema(format!("line {line}: duplicate year {year}")));
        }
        let row = cols
            .iter()
            .map(|&c| {
                let v = parse_cell(&rec, c, "value")?;
                if v < 0.0 {
                    return Err(Error::Schema(format!(
                        "line {line}, column {}: negative value {v} for site '{}'",
                        c + 1,
                        header[c]
                    )));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        years.push(year);
        rows.push(row);
    }
    if years.is_empty() {
        return Err(Error::Schema("values file has no year rows".into()));
    }
    Dataset::new(label, sites, years, rows)
}

/// Loads a dataset from a sites file and a values file, normalizing the
/// site coordinates over the sites file.
pub fn load_dataset(sites_path: &Path, values_path: &Path, label: &str) -> Result<Dataset> {
    let sites = read_sites(open(sites_path)?)?;
    let (sites, _) = normalize_coords(&sites)?;
    read_values(open(values_path)?, sites, label)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_sites<W: Write>(mut out: W, sites: &[Site]) -> Result<()> {
    writeln!(out, "id,lat,lon,alt")?;
    for s in sites {
        writeln!(out, "{},{},{},{}", s.id, s.lat, s.lon, s.alt)?;
    }
    Ok(())
}

pub fn write_values<W: Write>(mut out: W, data: &Dataset) -> Result<()> {
    let ids: Vec<&str> = data.sites.iter().map(|s| s.id.as_str()).collect();
    writeln!(out, "year,{}", ids.join(","))?;
    for (y, row) in data.rows().enumerate() {
        write!(out, "{}", data.years[y])?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sites() -> Vec<Site> {
        vec![
            Site::new("a", 34.23, 126.22, 1.3),
            Site::new("b", 38.15, 129.24, 263.1),
            Site::new("c", 36.19, 127.0, 50.0),
        ]
    }

    #[test]
    fn normalization_examples() {
        let (s, norm) = normalize_coords(&sites()).unwrap();
        assert_eq!(s[0].norm_lat, 0.0);
        assert_eq!(s[1].norm_lat, 1.0);
        assert!((s[2].norm_lat - 0.5).abs() < 1e-12);
        assert_eq!(s[0].norm_alt, 0.0);
        assert_eq!(s[1].norm_alt, 1.0);
        assert_eq!(norm.apply(&sites()[2]), s[2]);
        assert!(s.iter().all(|x| (0.0..=1.0).contains(&x.norm_lon)));
    }

    #[test]
    fn degenerate_extent() {
        let flat = vec![Site::new("a", 1.0, 2.0, 0.0), Site::new("b", 1.0, 3.0, 0.0)];
        assert_eq!(normalize_coords(&flat).unwrap_err(), Error::DegenerateExtent("latitude"));
        let flat = vec![Site::new("a", 1.0, 2.0, 0.0), Site::new("b", 2.0, 2.0, 0.0)];
        assert_eq!(normalize_coords(&flat).unwrap_err(), Error::DegenerateExtent("longitude"));
        // constant altitude is tolerated
        let ok = vec![Site::new("a", 1.0, 2.0, 5.0), Site::new("b", 2.0, 3.0, 5.0)];
        let (s, n) = normalize_coords(&ok).unwrap();
        assert!(n.alt.is_none() && s[1].norm_alt == 0.0);
    }

    #[test]
    fn values_reordered_by_site_id() {
        let text = "year,c,a,b\n1971,3,1,2\n1972,6,4,5\n";
        let d = read_values(text.as_bytes(), sites(), "r").unwrap();
        assert_eq!(d.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(d.column(2), vec![3.0, 6.0]);
        assert_eq!(d.years(), &[1971, 1972]);
    }

    #[test]
    fn schema_errors() {
        let missing = read_values("year,a,b\n1971,1,2\n".as_bytes(), sites(), "r").unwrap_err();
        assert!(missing.to_string().contains("'c'"), "{missing}");
        let unknown = read_values("year,a,b,c,zz\n1971,1,2,3,4\n".as_bytes(), sites(), "r").unwrap_err();
        assert!(unknown.to_string().contains("'zz'"));
        let neg = read_values("year,a,b,c\n1971,1,2,3\n1972,1,-2,3\n".as_bytes(), sites(), "r").unwrap_err();
        let msg = neg.to_string();
        assert!(msg.contains("line 3") && msg.contains("column 3") && msg.contains("'b'"), "{msg}");
        let dup = read_values("year,a,b,c\n1971,1,2,3\n1971,1,2,3\n".as_bytes(), sites(), "r").unwrap_err();
        assert!(dup.to_string().contains("duplicate year"));
        let bad = read_values("year,a,b,c\n1971,1,x,3\n".as_bytes(), sites(), "r").unwrap_err();
        assert!(bad.to_string().contains("column 3"));
        let empty = read_values("year,a,b,c\n".as_bytes(), sites(), "r").unwrap_err();
        assert!(matches!(empty, Error::Schema(_)));
        assert!(read_sites("id,lat,lon\nx,1,2\n".as_bytes()).is_err());
        assert!(read_sites("id,lat,lon,alt\nx,1,2,3\nx,2,3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn write_then_read_round_trip() {
        let (s, _) = normalize_coords(&sites()).unwrap();
        let d = Dataset::new("r", s.clone(), vec![2000, 2001], vec![vec![0.1, 2.5, 1e-7], vec![3.0, 4.25, 99.125]]).unwrap();
        let mut sbuf = Vec::new();
        write_sites(&mut sbuf, d.sites()).unwrap();
        let mut vbuf = Vec::new();
        write_values(&mut vbuf, &d).unwrap();
        let back_sites = read_sites(sbuf.as_slice()).unwrap();
        let (back_sites, _) = normalize_coords(&back_sites).unwrap();
        let back = read_values(vbuf.as_slice(), back_sites, "r").unwrap();
        assert_eq!(back, d);
        let mut again = Vec::new();
        write_values(&mut again, &back).unwrap();
        assert_eq!(again, vbuf);
    }

    #[test]
    fn select_and_permute() {
        let (s, _) = normalize_coords(&sites()).unwrap();
        let d = Dataset::new("r", s, vec![1, 2], vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = d.select_years(&[1, 1, 0]);
        assert_eq!(b.years(), &[2, 2, 1]);
        assert_eq!(b.row(1), &[4.0, 5.0, 6.0]);
        let p = d.permute_sites(&[2, 0, 1]);
        assert_eq!(p.row(0), &[3.0, 1.0, 2.0]);
        assert_eq!(p.sites()[0].id, "c");
        assert!(Dataset::new("x", sites(), vec![1], vec![vec![1.0]]).is_err());
    }
}
