use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;

use super::IngestError;

const CHUNK_LINES: usize = 65_536;

/// Result of decoding one input line.
pub(crate) enum LineOutcome<T> {
    Record(T),
    /// Line failed to decode; carries the drop reason and message.
    Rejected(super::DropReason, String),
    Blank,
}

/// Reads a newline-delimited file in chunks, decoding each chunk in parallel
/// and handing results to `sink` in file order. Lines are 1-based.
pub(crate) fn for_each_line<T, D, S>(path: &Path, decode: D, mut sink: S) -> Result<(), IngestError>
where
    T: Send,
    D: Fn(&[u8]) -> LineOutcome<T> + Sync,
    S: FnMut(usize, LineOutcome<T>),
{
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line_no = 0usize;
    loop {
        let mut chunk: Vec<(usize, Vec<u8>)> = Vec::with_capacity(CHUNK_LINES);
        while chunk.len() < CHUNK_LINES {
            let mut buf = Vec::new();
            let n = reader
                .read_until(b'\n', &mut buf)
                .map_err(|e| IngestError::io(path, e))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            while matches!(buf.last(), Some(b'\n' | b'\r')) {
                buf.pop();
            }
            chunk.push((line_no, buf));
        }
        if chunk.is_empty() {
            break;
        }
        let decoded: Vec<(usize, LineOutcome<T>)> = chunk
            .par_iter()
            .map(|(n, bytes)| {
                if bytes.iter().all(u8::is_ascii_whitespace) {
                    (*n, LineOutcome::Blank)
                } else {
                    (*n, decode(bytes))
                }
            })
            .collect();
        for (n, outcome) in decoded {
            sink(n, outcome);
        }
    }
    Ok(())
}
