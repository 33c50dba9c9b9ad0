//! BIO -> BIOES conversion and lenient span extraction in the style of the
//! conlleval script.

/// A typed span: (entity type, start, end), token indices inclusive.
pub type Span = (String, usize, usize);

fn parse_tag(tag: &str) -> (char, &str) {
    if tag == "O" || tag.is_empty() {
        return ('O', "");
    }
    match tag.split_once('-') {
        Some((p, t)) if matches!(p, "B" | "I" | "E" | "S") => {
            (p.chars().next().unwrap(), t)
        }
        // untyped or malformed tags are treated leniently as chunk interiors
        _ => ('I', tag),
    }
}

fn starts_chunk(prev: char, cur: char, prev_type: &str, cur_type: &str) -> bool {
    match cur {
        'B' | 'S' => true,
        'I' | 'E' => matches!(prev, 'O' | 'E' | 'S') || prev_type != cur_type,
        _ => false,
    }
}

fn ends_chunk(prev: char, cur: char, prev_type: &str, cur_type: &str) -> bool {
    match prev {
        'E' | 'S' => true,
        'B' | 'I' => matches!(cur, 'B' | 'S' | 'O') || prev_type != cur_type,
        _ => false,
    }
}

/// Extract typed spans from a BIO or BIOES tag sequence, decoding leniently:
/// an `I-`/`E-` with no open chunk starts one, and malformed transitions
/// close chunks rather than erroring.
pub fn spans(tags: &[String]) -> Vec<Span> {
    let mut out = Vec::new();
    let (mut prev, mut prev_type) = ('O', String::new());
    let mut open: Option<usize> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (cur, cur_type) = parse_tag(tag);
        if open.is_some() && ends_chunk(prev, cur, &prev_type, cur_type) {
            out.push((prev_type.clone(), open.take().unwrap(), i - 1));
        }
        if open.is_none() && starts_chunk(prev, cur, &prev_type, cur_type) {
            open = Some(i);
        }
        prev = cur;
        prev_type = cur_type.to_string();
    }
    if let Some(start) = open {
        out.push((prev_type, start, tags.len() - 1));
    }
    out
}

/// Convert a BIO sequence to BIOES. Dangling `I-` tags (no preceding `B-` or
/// `I-` of the same type) are repaired to `B-` and logged; the set of typed
/// spans is preserved exactly.
pub fn to_bioes(bio: &[String]) -> Vec<String> {
    // repair pass: I- without an open chunk of the same type becomes B-
    let mut repaired: Vec<String> = Vec::with_capacity(bio.len());
    let mut open_type: Option<String> = None;
    for tag in bio {
        let (p, t) = parse_tag(tag);
        match p {
            'O' => {
                open_type = None;
                repaired.push("O".to_string());
            }
            'B' => {
                open_type = Some(t.to_string());
                repaired.push(tag.clone());
            }
            _ => {
                if open_type.as_deref() == Some(t) {
                    repaired.push(format!("I-{t}"));
                } else {
                    log::warn!("repairing dangling I-{t} to B-{t}");
                    open_type = Some(t.to_string());
                    repaired.push(format!("B-{t}"));
                }
            }
        }
    }

    let mut out = repaired.clone();
    for (ty, start, end) in spans(&repaired) {
        if start == end {
            out[start] = format!("S-{ty}");
        } else {
            out[start] = format!("B-{ty}");
            out[end] = format!("E-{ty}");
            for slot in out.iter_mut().take(end).skip(start + 1) {
                *slot = format!("I-{ty}");
            }
        }
    }
    out
}
