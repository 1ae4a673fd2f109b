use std::collections::HashMap;

use super::ModelError;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const SEP: u32 = 2;
pub const EOS: u32 = 3;
const N_SPECIAL: u32 = 4;

/// Character vocabulary plus the four special tokens.
///
/// Token ids: `PAD=0, BOS=1, SEP=2, EOS=3`, then characters in configured order.
/// The output head only predicts tokens that can follow inside a target, i.e.
/// `EOS` and the characters; output class `c` is token id `c + 3`, so output
/// class order agrees with token id order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    chars: Vec<char>,
    ids: HashMap<char, u32>,
}

impl Vocab {
    pub fn new(chars: &str) -> Result<Self, ModelError> {
        let chars: Vec<char> = chars.chars().collect();
        if chars.is_empty() {
            return Err(ModelError::Config("character set is empty".into()));
        }
        let mut ids = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if ids.insert(c, N_SPECIAL + i as u32).is_some() {
                return Err(ModelError::Config(format!("character {c:?} listed twice")));
            }
        }
        Ok(Self { chars, ids })
    }

    pub fn size(&self) -> usize {
        self.chars.len() + N_SPECIAL as usize
    }

    /// Number of output classes (`EOS` + characters).
    pub fn n_out(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn char_id(&self, c: char) -> Option<u32> {
        self.ids.get(&c).copied()
    }

    pub fn class_of_token(&self, id: u32) -> Option<usize> {
        (id >= EOS && (id as usize) < self.size()).then(|| (id - EOS) as usize)
    }

    pub fn token_of_class(&self, class: usize) -> u32 {
        class as u32 + EOS
    }

    /// Character for an output class; `None` for `EOS`.
    pub fn class_char(&self, class: usize) -> Option<char> {
        if class == 0 {
            None
        } else {
            self.chars.get(class - 1).copied()
        }
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<u32>, ModelError> {
        text.chars()
            .map(|c| self.char_id(c).ok_or(ModelError::UnknownChar(c)))
            .collect()
    }

    /// Encodes `[BOS, source, SEP, target, EOS]`.
    pub fn encode_pair(
        &self,
        source: &str,
        target: &str,
        max_len: usize,
    ) -> Result<EncodedPair, ModelError> {
        let src = self.encode_text(source)?;
        let tgt = self.encode_text(target)?;
        let len = src.len() + tgt.len() + 3;
        if len > max_len {
            return Err(ModelError::TooLong { len, max_len });
        }
        let mut tokens = Vec::with_capacity(len);
        let mut positions = Vec::with_capacity(len);
        let mut segments = Vec::with_capacity(len);
        tokens.push(BOS);
        tokens.extend_from_slice(&src);
        tokens.push(SEP);
        for i in 0..=src.len() + 1 {
            positions.push(i as u32);
            segments.push(0);
        }
        tokens.extend_from_slice(&tgt);
        tokens.push(EOS);
        for j in 1..=tgt.len() + 1 {
            positions.push(j as u32);
            segments.push(1);
        }
        let sep_index = src.len() + 1;
        let target_mask = (0..len).map(|i| i >= sep_index && i + 1 < len).collect();
        Ok(EncodedPair {
            tokens,
            positions,
            segments,
            target_mask,
            sep_index,
        })
    }
}

/// A tokenized (source, target) pair ready for the model.
///
/// Positions restart inside the target segment: source tokens (including `BOS`
/// and `SEP`) count from 0, target tokens (including the closing `EOS`) count
/// from 1, and a segment id distinguishes the two halves.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub tokens: Vec<u32>,
    pub positions: Vec<u32>,
    pub segments: Vec<u8>,
    /// `target_mask[i]` is set when the prediction made at position `i`
    /// (of token `i + 1`) belongs to the target-plus-EOS span.
    pub target_mask: Vec<bool>,
    pub sep_index: usize,
}

impl EncodedPair {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of scored predictions: target length + 1.
    pub fn n_predictions(&self) -> usize {
        self.target_mask.iter().filter(|&&m| m).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_layout_and_mask() {
        let v = Vocab::new("ab").unwrap();
        let e = v.encode_pair("ab", "b", 16).unwrap();
        assert_eq!(e.tokens, vec![BOS, 4, 5, SEP, 5, EOS]);
        assert_eq!(e.positions, vec![0, 1, 2, 3, 1, 2]);
        assert_eq!(e.segments, vec![0, 0, 0, 0, 1, 1]);
        assert_eq!(e.target_mask, vec![false, false, false, true, true, false]);
        assert_eq!(e.n_predictions(), 2);
    }

    #[test]
    fn empty_target_predicts_only_eos() {
        let v = Vocab::new("ab").unwrap();
        let e = v.encode_pair("a", "", 16).unwrap();
        assert_eq!(e.n_predictions(), 1);
    }

    #[test]
    fn errors() {
        let v = Vocab::new("ab").unwrap();
        assert!(matches!(
            v.encode_pair("abc", "", 16),
            Err(ModelError::UnknownChar('c'))
        ));
        assert!(matches!(
            v.encode_pair("ab", "ab", 6),
            Err(ModelError::TooLong { len: 7, max_len: 6 })
        ));
        assert!(Vocab::new("aa").is_err());
    }

    #[test]
    fn classes_follow_token_order() {
        let v = Vocab::new("xyz").unwrap();
        assert_eq!(v.n_out(), 4);
        assert_eq!(v.class_of_token(EOS), Some(0));
        assert_eq!(v.class_char(2), Some('y'));
        assert_eq!(v.token_of_class(3), v.char_id('z').unwrap());
        assert_eq!(v.class_of_token(SEP), None);
    }
}
