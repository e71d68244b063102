//! Standard MIDI file (type 0/1) ingestion.
//!
//! MIDI is an ingestion convenience; the canonical interchange format is the
//! notes JSON schema in [`crate::json`]. Notes from all tracks are merged,
//! quantized to 24 ticks per quarter note (rounding half-up, zero-length
//! notes promoted to one tick), and the tempo is taken from the first tempo
//! event in the file (120 qpm if there is none).

use std::collections::HashMap;

use crate::{Note, Score, ScoreError};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u8(&mut self) -> Result<u8, ScoreError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| ScoreError::midi(self.pos, "unexpected end of file"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ScoreError> {
        if self.pos + n > self.bytes.len() {
            return Err(ScoreError::midi(self.pos, format!("expected {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ScoreError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, ScoreError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most 4 bytes.
    fn vlq(&mut self) -> Result<u32, ScoreError> {
        let start = self.pos;
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(ScoreError::midi(start, "variable-length quantity longer than 4 bytes"))
    }

    fn data_byte(&mut self, what: &str) -> Result<u8, ScoreError> {
        let at = self.pos;
        let b = self.u8()?;
        if b & 0x80 != 0 {
            return Err(ScoreError::midi(at, format!("{what} has high bit set: {b:#04x}")));
        }
        Ok(b)
    }
}

struct RawNote {
    onset_tick: u64,
    end_tick: u64,
    pitch: u8,
    velocity: u8,
}

fn round_div(n: u64, d: u64) -> u64 {
    (n + d / 2) / d
}

/// Parses a standard MIDI file (format 0 or 1) into a [`Score`].
///
/// `performer_id` is not representable in MIDI and defaults to 0; callers
/// that know it can rewrite the field on the result.
pub fn parse_midi(bytes: &[u8]) -> Result<Score, ScoreError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != b"MThd" {
        return Err(ScoreError::midi(0, "missing MThd header chunk"));
    }
    let header_len = c.u32()?;
    if header_len < 6 {
        return Err(ScoreError::midi(4, format!("header chunk length {header_len} < 6")));
    }
    let format = c.u16()?;
    if format > 1 {
        return Err(ScoreError::midi(8, format!("unsupported SMF format {format}, expected 0 or 1")));
    }
    let ntrks = c.u16()? as usize;
    let division_raw = c.u16()?;
    if division_raw & 0x8000 != 0 {
        return Err(ScoreError::midi(12, "SMPTE time division is not supported"));
    }
    let division = division_raw as u64;
    if division == 0 {
        return Err(ScoreError::midi(12, "time division of zero"));
    }
    // Skip any extra header bytes a nonstandard writer may have added.
    c.take(header_len as usize - 6)?;

    let mut notes: Vec<RawNote> = Vec::new();
    // First tempo event in the file, ordered by (tick, track).
    let mut tempo: Option<(u64, usize, f64)> = None;

    for track_index in 0..ntrks {
        let chunk_start = c.pos;
        if c.take(4)? != b"MTrk" {
            return Err(ScoreError::midi(chunk_start, "expected MTrk chunk"));
        }
        let length = c.u32()? as usize;
        let track_end = c.pos + length;
        if track_end > bytes.len() {
            return Err(ScoreError::midi(
                chunk_start,
                format!("track chunk length {length} runs past end of file"),
            ));
        }

        let mut tick: u64 = 0;
        let mut running_status: Option<u8> = None;
        // Open note-ons per (channel, pitch), closed first-in-first-out.
        let mut open: HashMap<(u8, u8), Vec<(u64, u8)>> = HashMap::new();

        while c.pos < track_end {
            tick += c.vlq()? as u64;
            let status_at = c.pos;
            let first = c.u8()?;
            let status = if first & 0x80 != 0 {
                if first < 0xf0 {
                    running_status = Some(first);
                }
                first
            } else {
                c.pos -= 1;
                running_status
                    .ok_or_else(|| ScoreError::midi(status_at, "data byte with no running status"))?
            };

            match status {
                0x80..=0x8f | 0x90..=0x9f => {
                    let channel = status & 0x0f;
                    let pitch = c.data_byte("note number")?;
                    let velocity = c.data_byte("velocity")?;
                    let is_on = status & 0xf0 == 0x90 && velocity > 0;
                    if is_on {
                        open.entry((channel, pitch)).or_default().push((tick, velocity));
                    } else {
                        let stack = open.entry((channel, pitch)).or_default();
                        if !stack.is_empty() {
                            let (onset_tick, vel) = stack.remove(0);
                            notes.push(RawNote { onset_tick, end_tick: tick, pitch, velocity: vel });
                        }
                        // Unmatched note-off: ignore.
                    }
                }
                0xa0..=0xaf | 0xb0..=0xbf | 0xe0..=0xef => {
                    c.take(2)?;
                }
                0xc0..=0xcf | 0xd0..=0xdf => {
                    c.take(1)?;
                }
                0xf0 | 0xf7 => {
                    let len = c.vlq()? as usize;
                    c.take(len)?;
                }
                0xff => {
                    let kind = c.u8()?;
                    let len = c.vlq()? as usize;
                    let data = c.take(len)?;
                    if kind == 0x51 {
                        if len != 3 {
                            return Err(ScoreError::midi(
                                status_at,
                                format!("tempo event with length {len}, expected 3"),
                            ));
                        }
                        let us_per_quarter =
                            ((data[0] as u64) << 16 | (data[1] as u64) << 8 | data[2] as u64) as f64;
                        if us_per_quarter > 0.0 {
                            let qpm = 60_000_000.0 / us_per_quarter;
                            let key = (tick, track_index);
                            if tempo.map_or(true, |(t, i, _)| key < (t, i)) {
                                tempo = Some((tick, track_index, qpm));
                            }
                        }
                    } else if kind == 0x2f {
                        break;
                    }
                }
                other => {
                    return Err(ScoreError::midi(status_at, format!("unsupported status byte {other:#04x}")));
                }
            }
        }
        // Notes still sounding close at the end of the track.
        let mut dangling: Vec<((u8, u8), Vec<(u64, u8)>)> = open.into_iter().collect();
        dangling.sort();
        for ((_, pitch), stack) in dangling {
            for (onset_tick, vel) in stack {
                notes.push(RawNote { onset_tick, end_tick: tick, pitch, velocity: vel });
            }
        }
        c.pos = track_end;
    }

    if notes.is_empty() {
        return Err(ScoreError::EmptyScore);
    }

    let quantized = notes
        .into_iter()
        .map(|raw| {
            let onset = round_div(raw.onset_tick * 24, division);
            let end = round_div(raw.end_tick * 24, division);
            let duration = (end.saturating_sub(onset)).max(1);
            Note {
                pitch: raw.pitch,
                onset: onset as u32,
                duration: duration as u32,
                velocity: Some(raw.velocity),
            }
        })
        .collect();

    let tempo = tempo.map(|(_, _, qpm)| qpm).unwrap_or(120.0);
    Score::new(quantized, tempo, 0)
}
