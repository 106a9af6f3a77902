use super::vocab::{Vocabulary, BOS, EOS};
use crate::error::ModelError;

/// Prompt text preceding the acoustic block.
pub const PROMPT_PREFIX: [&str; 7] = ["describe", "the", "detail", "of", "this", "audio", ":"];
/// Prompt text between the acoustic block and the caption.
pub const PROMPT_SUFFIX: [&str; 5] = ["\n", "---", "\n", "detailed", ":"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Text(usize),
    /// Row of the bridge output.
    Acoustic(usize),
}

/// Decoder input: prompt, acoustic splice, optional caption ending in `<eos>`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpliceSequence {
    pub prefix: Vec<usize>,
    pub acoustic_len: usize,
    pub suffix: Vec<usize>,
    pub caption: Vec<usize>,
}

impl SpliceSequence {
    pub fn len(&self) -> usize {
        self.prefix.len() + self.acoustic_len + self.suffix.len() + self.caption.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the first caption slot.
    pub fn caption_start(&self) -> usize {
        self.prefix.len() + self.acoustic_len + self.suffix.len()
    }

    pub fn slots(&self) -> Vec<Slot> {
        let mut s: Vec<Slot> = self.prefix.iter().map(|&t| Slot::Text(t)).collect();
        s.extend((0..self.acoustic_len).map(Slot::Acoustic));
        s.extend(self.suffix.iter().chain(&self.caption).map(|&t| Slot::Text(t)));
        s
    }

    /// True exactly on caption tokens and the closing `<eos>`.
    pub fn loss_mask(&self) -> Vec<bool> {
        let start = self.caption_start();
        (0..self.len()).map(|i| i >= start).collect()
    }

    /// Next-token targets for input positions `0..len-1`.
    pub fn targets(&self) -> Vec<Option<usize>> {
        let slots = self.slots();
        let mask = self.loss_mask();
        (1..slots.len())
            .map(|i| match (mask[i], slots[i]) {
                (true, Slot::Text(t)) => Some(t),
                _ => None,
            })
            .collect()
    }

    /// Copy with caption replaced by `ids` (no `<eos>` appended).
    pub fn with_partial_caption(&self, ids: &[usize]) -> Self {
        Self {
            caption: ids.to_vec(),
            ..self.clone()
        }
    }
}

/// Builds the spliced decoder sequence; `caption` gets a trailing `<eos>`.
pub fn assemble_sequence(
    acoustic_len: usize,
    caption: Option<&[usize]>,
    v: &Vocabulary,
    max_seq_len: usize,
) -> Result<SpliceSequence, ModelError> {
    if acoustic_len == 0 {
        return Err(ModelError::EmptyInput);
    }
    let mut prefix = vec![BOS];
    prefix.extend(PROMPT_PREFIX.iter().map(|w| v.id(w)));
    let suffix = PROMPT_SUFFIX.iter().map(|w| v.id(w)).collect();
    let caption = caption
        .map(|c| c.iter().copied().chain([EOS]).collect())
        .unwrap_or_default();
    let s = SpliceSequence {
        prefix,
        acoustic_len,
        suffix,
        caption,
    };
    if s.len() > max_seq_len {
        return Err(ModelError::SequenceTooLong {
            len: s.len(),
            max: max_seq_len,
        });
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::build(["one two three four five six seven eight"]).unwrap()
    }

    #[test]
    fn lengths_and_mask() {
        let v = vocab();
        let cap = v.tokenize("one two three four five six seven eight");
        let s = assemble_sequence(45, Some(&cap), &v, 512).unwrap();
        assert_eq!(s.len(), 67);
        assert_eq!(s.loss_mask().iter().filter(|&&m| m).count(), 9);
        let t = s.targets();
        assert_eq!(t.len(), 66);
        assert_eq!(t.iter().flatten().count(), 9);
        assert_eq!(*t.last().unwrap(), Some(EOS));
        assert!(matches!(
            assemble_sequence(45, Some(&cap), &v, 66),
            Err(ModelError::SequenceTooLong { len: 67, max: 66 })
        ));
    }

    #[test]
    fn inference_sequence_ends_with_prompt() {
        let v = vocab();
        let s = assemble_sequence(3, None, &v, 512).unwrap();
        assert!(s.loss_mask().iter().all(|&m| !m));
        let text: Vec<&str> = s
            .slots()
            .iter()
            .filter_map(|x| match x {
                Slot::Text(t) => v.token(*t),
                Slot::Acoustic(_) => None,
            })
            .collect();
        assert_eq!(
            text,
            ["<bos>", "describe", "the", "detail", "of", "this", "audio", ":", "\n", "---", "\n", "detailed", ":"]
        );
        assert_eq!(s.slots()[8], Slot::Acoustic(0));
        assert_eq!(s.slots()[10], Slot::Acoustic(2));
    }
}
