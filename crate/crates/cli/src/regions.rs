//! JSON encoding of regions in `C^n`.
//!
//! A region is one of
//! `{"rect": [plane, ...]}`, `{"union": [region, ...]}`, `{"not": region}`,
//! and a plane region is `"full"`, `{"disk": {"center": [re, im], "radius": r}}`,
//! `{"half": {"normal": [re, im], "offset": o}}` or `{"union": [plane, ...]}`.

use serde_json::{json, Map, Value};
use specflag_core::hsproj::{PlaneRegion, Region};

use crate::io::{complex_json, parse_complex, CliError, CliResult};

fn single_key(v: &Value, what: &str) -> CliResult<(String, Value)> {
    let obj = v.as_object().filter(|o| o.len() == 1).ok_or_else(|| {
        CliError::format(format!("{what}: expected an object with exactly one key"))
    })?;
    let (k, inner) = obj.iter().next().expect("one entry");
    Ok((k.clone(), inner.clone()))
}

fn number(v: &Value, name: &str) -> CliResult<f64> {
    v.get(name)
        .and_then(Value::as_f64)
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::format(format!("\"{name}\" must be a finite number")))
}

pub fn parse_plane(v: &Value) -> CliResult<PlaneRegion> {
    if v.as_str() == Some("full") {
        return Ok(PlaneRegion::Full);
    }
    let (key, inner) = single_key(v, "plane region")?;
    match key.as_str() {
        "disk" => {
            let center = parse_complex(inner.get("center").unwrap_or(&Value::Null), "disk center")?;
            let radius = number(&inner, "radius")?;
            if radius < 0.0 {
                return Err(CliError::format("disk radius must be nonnegative"));
            }
            Ok(PlaneRegion::Disk { center, radius })
        }
        "half" => {
            let normal = parse_complex(inner.get("normal").unwrap_or(&Value::Null), "half-plane normal")?;
            if normal.norm() == 0.0 {
                return Err(CliError::format("half-plane normal must be nonzero"));
            }
            Ok(PlaneRegion::HalfPlane { normal, offset: number(&inner, "offset")? })
        }
        "union" => {
            let parts = inner.as_array().ok_or_else(|| CliError::format("plane union must be an array"))?;
            Ok(PlaneRegion::Union(parts.iter().map(parse_plane).collect::<CliResult<_>>()?))
        }
        other => Err(CliError::format(format!("unknown plane region \"{other}\""))),
    }
}

pub fn parse_region(v: &Value, n: usize) -> CliResult<Region> {
    let (key, inner) = single_key(v, "region")?;
    let region = match key.as_str() {
        "rect" => {
            let parts = inner.as_array().ok_or_else(|| CliError::format("rect must be an array"))?;
            if parts.len() != n {
                return Err(CliError::format(format!("rect needs {n} factors, found {}", parts.len())));
            }
            Region::Rectangle(parts.iter().map(parse_plane).collect::<CliResult<_>>()?)
        }
        "union" => {
            let parts = inner.as_array().ok_or_else(|| CliError::format("union must be an array"))?;
            Region::Union(parts.iter().map(|p| parse_region(p, n)).collect::<CliResult<_>>()?)
        }
        "not" => parse_region(&inner, n)?.complement(),
        other => return Err(CliError::format(format!("unknown region \"{other}\""))),
    };
    region.validate(n)?;
    Ok(region)
}

pub fn plane_json(p: &PlaneRegion) -> Value {
    match p {
        PlaneRegion::Full => json!("full"),
        PlaneRegion::Disk { center, radius } => json!({"disk": {"center": complex_json(*center), "radius": radius}}),
        PlaneRegion::HalfPlane { normal, offset } => {
            json!({"half": {"normal": complex_json(*normal), "offset": offset}})
        }
        PlaneRegion::Union(parts) => json!({"union": parts.iter().map(plane_json).collect::<Vec<_>>()}),
    }
}

pub fn region_json(r: &Region) -> Value {
    match r {
        Region::Rectangle(parts) => json!({"rect": parts.iter().map(plane_json).collect::<Vec<_>>()}),
        Region::Union(parts) => json!({"union": parts.iter().map(region_json).collect::<Vec<_>>()}),
        Region::Complement(inner) => json!({"not": region_json(inner)}),
        Region::Predicate(p) => {
            let mut m = Map::new();
            m.insert("predicate".into(), Value::String(p.label.clone()));
            Value::Object(m)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use specflag_core::numcore::c;

    #[test]
    fn round_trip() {
        let r = Region::Union(vec![
            Region::Rectangle(vec![
                PlaneRegion::Disk { center: c(1.0, -0.5), radius: 0.25 },
                PlaneRegion::Union(vec![PlaneRegion::Full, PlaneRegion::HalfPlane { normal: c(0.0, 1.0), offset: 2.0 }]),
            ]),
            Region::full(2).complement(),
        ]);
        assert_eq!(parse_region(&region_json(&r), 2).unwrap(), r);
    }

    #[test]
    fn rejects_bad_regions() {
        for text in [
            r#"{"rect": ["full"]}"#,
            r#"{"rect": [{"disk": {"center": [0, 0], "radius": -1}}, "full"]}"#,
            r#"{"rect": [{"half": {"normal": [0, 0], "offset": 1}}, "full"]}"#,
            r#"{"ball": 1}"#,
            r#"{"rect": ["full", "full"], "not": 1}"#,
        ] {
            let v: Value = serde_json::from_str(text).unwrap();
            assert!(parse_region(&v, 2).is_err(), "{text}");
        }
    }
}
