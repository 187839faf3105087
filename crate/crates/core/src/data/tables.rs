//! CSV tables: annotations, correction ledgers and count predictions.

use std::collections::HashSet;
use std::io::{Read, Write};

use csv::{ReaderBuilder, StringRecord, WriterBuilder};

use super::DataError;
use crate::metrics::{Correction, CorrectionLedger, Prediction, VideoAnnotation};

const ANNOTATION_HEADER: [&str; 3] = ["video_id", "count", "action"];
const ANNOTATION_HEADER_SALIENT: [&str; 5] = ["video_id", "count", "action", "salient_I", "salient_II"];
const LEDGER_HEADER: [&str; 4] = ["video_id", "wrong", "corrected", "reason"];

fn record_line(record: &StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::Io(io),
        other => DataError::parse(line, format!("{other:?}")),
    }
}

fn read_table<R: Read>(reader: R) -> Result<(Vec<String>, Vec<StringRecord>), DataError> {
    let mut rdr = ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(|h| h.trim().to_string()).collect();
    let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(csv_error)?;
    Ok((header, rows))
}

fn parse_u32(field: &str, line: usize, what: &str) -> Result<u32, DataError> {
    field
        .trim()
        .parse::<u32>()
        .map_err(|_| DataError::parse(line, format!("{what} must be a non-negative integer, got '{field}'")))
}

fn parse_frame_list(field: &str, line: usize) -> Result<Vec<u64>, DataError> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    let frames = field
        .split(';')
        .map(|f| f.trim().parse::<u64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| DataError::parse(line, format!("bad salient frame list '{field}'")))?;
    if frames.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DataError::parse(line, "salient frames must be strictly increasing"));
    }
    Ok(frames)
}

fn join_frames(frames: &[u64]) -> String {
    frames.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

/// Parses `video_id,count,action[,salient_I,salient_II]`.
pub fn parse_annotations<R: Read>(reader: R) -> Result<Vec<VideoAnnotation>, DataError> {
    let (header, rows) = read_table(reader)?;
    let with_salient = if header == ANNOTATION_HEADER {
        false
    } else if header == ANNOTATION_HEADER_SALIENT {
        true
    } else {
        return Err(DataError::parse(1, format!("unexpected annotation header {header:?}")));
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        let line = record_line(row);
        let video_id = row[0].trim().to_string();
        if video_id.is_empty() {
            return Err(DataError::parse(line, "empty video_id"));
        }
        if !seen.insert(video_id.clone()) {
            return Err(DataError::DuplicateVideoId { line, video_id });
        }
        let mut ann = VideoAnnotation::new(video_id, parse_u32(&row[1], line, "count")?, row[2].trim());
        if with_salient {
            ann.salient_i_frames = parse_frame_list(&row[3], line)?;
            ann.salient_ii_frames = parse_frame_list(&row[4], line)?;
        }
        out.push(ann);
    }
    Ok(out)
}

/// Writes annotations; salient columns appear when any row carries frames.
pub fn write_annotations<W: Write>(annotations: &[VideoAnnotation], writer: W) -> Result<(), DataError> {
    let with_salient = annotations
        .iter()
        .any(|a| !a.salient_i_frames.is_empty() || !a.salient_ii_frames.is_empty());
    let mut w = WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    if with_salient {
        w.write_record(ANNOTATION_HEADER_SALIENT).map_err(csv_error)?;
    } else {
        w.write_record(ANNOTATION_HEADER).map_err(csv_error)?;
    }
    for a in annotations {
        let count = a.ground_truth_count.to_string();
        if with_salient {
            let (si, sii) = (join_frames(&a.salient_i_frames), join_frames(&a.salient_ii_frames));
            w.write_record([a.video_id.as_str(), &count, &a.action, &si, &sii]).map_err(csv_error)?;
        } else {
            w.write_record([a.video_id.as_str(), &count, &a.action]).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses `video_id,wrong,corrected,reason`.
pub fn parse_ledger<R: Read>(reader: R, name: &str) -> Result<CorrectionLedger, DataError> {
    let (header, rows) = read_table(reader)?;
    if header != LEDGER_HEADER {
        return Err(DataError::parse(1, format!("unexpected ledger header {header:?}")));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(rows.len());
    for row in &rows {
        let line = record_line(row);
        let video_id = row[0].trim().to_string();
        if !seen.insert(video_id.clone()) {
            return Err(DataError::DuplicateVideoId { line, video_id });
        }
        entries.push(Correction {
            video_id,
            wrong_count: parse_u32(&row[1], line, "wrong")?,
            corrected_count: parse_u32(&row[2], line, "corrected")?,
            reason: row[3].to_string(),
        });
    }
    CorrectionLedger::new(name, entries).map_err(|e| DataError::parse(0, e.to_string()))
}

pub fn write_ledger<W: Write>(ledger: &CorrectionLedger, writer: W) -> Result<(), DataError> {
    let mut w = WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(LEDGER_HEADER).map_err(csv_error)?;
    for e in &ledger.entries {
        w.write_record([e.video_id.as_str(), &e.wrong_count.to_string(), &e.corrected_count.to_string(), &e.reason])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads predictions from any CSV with `video_id` and `count` columns.
pub fn parse_predictions<R: Read>(reader: R) -> Result<Vec<Prediction>, DataError> {
    let (header, rows) = read_table(reader)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::parse(1, format!("prediction table lacks a '{name}' column")))
    };
    let (id_col, count_col) = (col("video_id")?, col("count")?);
    rows.iter()
        .map(|row| {
            let line = record_line(row);
            Ok(Prediction::new(row[id_col].trim(), parse_u32(&row[count_col], line, "count")?))
        })
        .collect()
}

pub fn write_predictions<W: Write>(predictions: &[Prediction], writer: W) -> Result<(), DataError> {
    let mut w = WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["video_id", "count"]).map_err(csv_error)?;
    for p in predictions {
        w.write_record([p.video_id.as_str(), &p.predicted_count.to_string()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_annotation_row() {
        let anns = parse_annotations("video_id,count,action\nstu4_5,51,PullUp\n".as_bytes()).unwrap();
        assert_eq!(anns, vec![VideoAnnotation::new("stu4_5", 51, "PullUp")]);
    }

    #[test]
    fn empty_body() {
        assert!(parse_annotations("video_id,count,action\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_ids() {
        let err = parse_annotations("video_id,count,action\na,1,x\nb,2,x\na,3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::DuplicateVideoId { line: 4, ref video_id } if video_id == "a"), "{err}");
    }

    #[test]
    fn salient_columns() {
        let text = "video_id,count,action,salient_I,salient_II\na,2,squat,3;40,10;50\nb,1,squat,,\n";
        let anns = parse_annotations(text.as_bytes()).unwrap();
        assert_eq!(anns[0].salient_i_frames, vec![3, 40]);
        assert_eq!(anns[0].salient_ii_frames, vec![10, 50]);
        assert!(anns[1].salient_i_frames.is_empty());
        let mut buf = Vec::new();
        write_annotations(&anns, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);

        let bad = "video_id,count,action,salient_I,salient_II\na,2,squat,40;3,\n";
        assert!(matches!(parse_annotations(bad.as_bytes()), Err(DataError::Parse { line: 2, .. })));
    }

    #[test]
    fn bad_annotation_rows() {
        assert!(parse_annotations("id,count,action\n".as_bytes()).is_err());
        assert!(matches!(
            parse_annotations("video_id,count,action\na,-1,x\n".as_bytes()),
            Err(DataError::Parse { line: 2, .. })
        ));
        assert!(parse_annotations("video_id,count,action\na,1\n".as_bytes()).is_err());
    }

    #[test]
    fn ledger_round_trip() {
        let text = "video_id,wrong,corrected,reason\nstu4_5,51,5,\"count mislabeled, see errata\"\n";
        let ledger = parse_ledger(text.as_bytes(), "errata").unwrap();
        assert_eq!(ledger.entries[0].wrong_count, 51);
        assert_eq!(ledger.entries[0].reason, "count mislabeled, see errata");
        let mut buf = Vec::new();
        write_ledger(&ledger, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn predictions_from_count_table() {
        let text = "video_id,action,count,final_state,events\na,squat,3,NEUTRAL,0-5;9-12;20-30\nb,squat,0,SEEN_I,\n";
        let p = parse_predictions(text.as_bytes()).unwrap();
        assert_eq!(p, vec![Prediction::new("a", 3), Prediction::new("b", 0)]);
        assert!(parse_predictions("video_id,n\na,1\n".as_bytes()).is_err());
    }
}
