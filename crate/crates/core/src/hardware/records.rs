use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::hardware::{MetricKind, SyntheticDevice};
use crate::space::{ArchSpace, Architecture};

pub const MEASUREMENT_HEADER: &str = "metric_kind,L,K,value,enc";

/// One measured architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub arch: Architecture,
    pub value: f64,
    pub metric_kind: MetricKind,
}

impl MeasurementRecord {
    pub fn encoding(&self) -> Tensor<f64> {
        self.arch.encoding()
    }
}

/// Measurements with an 80/20 train/validation split: the first
/// `train_len` records are the training fold.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub records: Vec<MeasurementRecord>,
    pub train_len: usize,
}

impl MeasurementSet {
    pub fn new(records: Vec<MeasurementRecord>) -> Self {
        let train_len = (records.len() * 4).div_ceil(5);
        Self { records, train_len }
    }

    pub fn train(&self) -> &[MeasurementRecord] {
        &self.records[..self.train_len]
    }

    pub fn valid(&self) -> &[MeasurementRecord] {
        &self.records[self.train_len..]
    }
}

/// Measures `n` uniformly random architectures of `space` on `device`.
pub fn sample_dataset<R: Rng + ?Sized>(
    device: &mut SyntheticDevice,
    space: &ArchSpace,
    n: usize,
    rng: &mut R,
) -> Result<MeasurementSet> {
    if n == 0 {
        return Err(Error::Parameter("need at least one measurement".into()));
    }
    let kind = device.metric_kind();
    let records = (0..n)
        .map(|_| {
            let arch = Architecture::random(space, rng);
            let value = device.measure(&arch)?;
            Ok(MeasurementRecord {
                arch,
                value,
                metric_kind: kind,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementSet::new(records))
}

pub fn write_measurements<W: Write>(mut w: W, records: &[MeasurementRecord]) -> Result<()> {
    writeln!(w, "{MEASUREMENT_HEADER}")?;
    for r in records {
        let enc: String = r
            .arch
            .ops()
            .iter()
            .flat_map(|&k| (0..r.arch.num_ops()).map(move |c| if c == k { '1' } else { '0' }))
            .collect();
        writeln!(
            w,
            "{},{},{},{},{}",
            r.metric_kind,
            r.arch.num_layers(),
            r.arch.num_ops(),
            r.value,
            enc
        )?;
    }
    Ok(())
}

pub fn save_measurements(path: &Path, records: &[MeasurementRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_measurements(&mut w, records)?;
    w.flush()?;
    Ok(())
}

/// Parses the measurement CSV. Lines starting with `#` before the header
/// are treated as comments.
pub fn read_measurements<R: BufRead>(reader: R) -> Result<Vec<MeasurementRecord>> {
    let mut lines = reader.lines().enumerate();
    loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::parse(
                "line 1",
                format!("missing header, expected `{MEASUREMENT_HEADER}`"),
            ));
        };
        let line = line?;
        if line.starts_with('#') {
            continue;
        }
        if line.trim_end() != MEASUREMENT_HEADER {
            return Err(Error::parse(
                format!("line {}", i + 1),
                format!("expected header `{MEASUREMENT_HEADER}`, found `{line}`"),
            ));
        }
        break;
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line).map_err(|e| match e {
            Error::Parse { detail, .. } => Error::parse(format!("line {}", i + 1), detail),
            Error::Validation(v) => Error::Validation(format!("line {}: {v}", i + 1)),
            other => other,
        })?);
    }
    Ok(out)
}

pub fn load_measurements(path: &Path) -> Result<Vec<MeasurementRecord>> {
    read_measurements(BufReader::new(File::open(path)?))
}

fn parse_record(line: &str) -> Result<MeasurementRecord> {
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() != 5 {
        return Err(Error::parse(
            "",
            format!("expected 5 fields, found {}", fields.len()),
        ));
    }
    let metric_kind = MetricKind::parse(fields[0])
        .ok_or_else(|| Error::parse("", format!("unknown metric_kind `{}`", fields[0])))?;
    let l: usize = fields[1]
        .parse()
        .map_err(|_| Error::parse("", format!("bad L `{}`", fields[1])))?;
    let k: usize = fields[2]
        .parse()
        .map_err(|_| Error::parse("", format!("bad K `{}`", fields[2])))?;
    let value: f64 = fields[3]
        .parse()
        .map_err(|_| Error::parse("", format!("bad value `{}`", fields[3])))?;
    if !value.is_finite() {
        return Err(Error::parse(
            "",
            format!("non-finite value `{}`", fields[3]),
        ));
    }
    let enc = fields[4].as_bytes();
    if l == 0 || k == 0 || enc.len() != l * k {
        return Err(Error::parse(
            "",
            format!("encoding has {} symbols, L·K = {}", enc.len(), l * k),
        ));
    }
    let mut ops = Vec::with_capacity(l);
    for layer in 0..l {
        let row = &enc[layer * k..(layer + 1) * k];
        if let Some(&bad) = row.iter().find(|&&c| c != b'0' && c != b'1') {
            return Err(Error::parse(
                "",
                format!("layer {layer}: symbol `{}` is not 0/1", bad as char),
            ));
        }
        let ones: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == b'1')
            .map(|(i, _)| i)
            .collect();
        if ones.len() != 1 {
            return Err(Error::Validation(format!(
                "layer {layer} has {} ones, expected exactly one",
                ones.len()
            )));
        }
        ops.push(ones[0]);
    }
    Ok(MeasurementRecord {
        arch: Architecture::new(ops, k)?,
        value,
        metric_kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardware::DeviceProfile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_split_sizes() {
        let space = ArchSpace::desk();
        let mut dev = SyntheticDevice::generate(&space, &DeviceProfile::latency(), 0).unwrap();
        let set =
            sample_dataset(&mut dev, &space, 10_000, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(set.train().len(), 8000);
        assert_eq!(set.valid().len(), 2000);
        assert!(set
            .records
            .iter()
            .all(|r| r.arch.ops()[0] == space.fixed_first_op));
        assert!(sample_dataset(&mut dev, &space, 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let space = ArchSpace::desk();
        let mut dev = SyntheticDevice::generate(&space, &DeviceProfile::latency(), 4).unwrap();
        let set = sample_dataset(&mut dev, &space, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut buf = Vec::new();
        write_measurements(&mut buf, &set.records).unwrap();
        let back = read_measurements(&buf[..]).unwrap();
        assert_eq!(back, set.records);
    }

    #[test]
    fn rejects_double_hot_layer() {
        let csv = format!("{MEASUREMENT_HEADER}\nlatency,2,2,3.5,1011\n");
        let err = read_measurements(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("layer 1") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn header_mismatch_names_expected_header() {
        let err = read_measurements("kind,value\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.contains(MEASUREMENT_HEADER), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv =
            format!("# seed=1\n{MEASUREMENT_HEADER}\nlatency,2,2,3.5,1001\nlatency,2,2,abc,1001\n");
        let err = read_measurements(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
    }
}
