//! Terminal elicitation: for each pair, which criterion matters more, then
//! by how much on the 1-9 scale.

use std::io::{BufRead, Write};

use fairthresh_core::ahp::{questions, CRITERIA, QUESTION_PAIRS};
use fairthresh_core::AhpRatings;

use crate::{CliError, CliResult};

pub fn elicit<R: BufRead, W: Write>(mut input: R, mut out: W, template: &str) -> CliResult<AhpRatings> {
    let texts = questions(template);
    let mut values = [1.0; 3];
    for (k, ((a, b), text)) in QUESTION_PAIRS.iter().zip(texts).enumerate() {
        let io = |e: std::io::Error| CliError::Runtime(e.to_string());
        writeln!(out, "\n[{}/3] {text}", k + 1).map_err(io)?;
        let prompt = format!("  more important: 1) {}  2) {}  > ", CRITERIA[*a], CRITERIA[*b]);
        let direction = ask(&mut input, &mut out, &prompt, 1, 2)?;
        let magnitude = ask(&mut input, &mut out, "  how many times (1 = equal, 9 = extremely)  > ", 1, 9)?;
        values[k] = if direction == 1 { magnitude as f64 } else { 1.0 / magnitude as f64 };
    }
    AhpRatings::new(values[0], values[1], values[2]).map_err(|e| CliError::Usage(e.to_string()))
}

fn ask<R: BufRead, W: Write>(input: &mut R, out: &mut W, prompt: &str, lo: u32, hi: u32) -> CliResult<u32> {
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    loop {
        write!(out, "{prompt}").map_err(io)?;
        out.flush().map_err(io)?;
        let mut line = String::new();
        if input.read_line(&mut line).map_err(io)? == 0 {
            return Err(CliError::Usage("input ended before all questions were answered".into()));
        }
        match line.trim().parse::<u32>() {
            Ok(v) if (lo..=hi).contains(&v) => return Ok(v),
            _ => writeln!(out, "  please enter a whole number from {lo} to {hi}").map_err(io)?,
        }
    }
}
