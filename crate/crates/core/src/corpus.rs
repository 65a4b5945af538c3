//! Corpus record types shared by every stage.
//!
//! Parsing from disk happens in the `storyq` crate; the types here only know
//! how to validate themselves.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of images in every photo sequence.
pub const IMAGES_PER_SEQUENCE: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("expected {expected} images, found {found}")]
    ImageCount { expected: usize, found: usize },
    #[error("expected {expected} sentences, found {found}")]
    SentenceCount { expected: usize, found: usize },
}

impl SchemaError {
    fn field(field: &'static str, reason: impl Into<String>) -> Self {
        SchemaError::Field {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
}

/// Precomputed object detections for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub image_id: String,
    #[serde(default)]
    pub detections: Vec<Detection>,
}

impl ImageAnnotation {
    pub fn validate(&self) -> Result<(), SchemaError> {
        for d in &self.detections {
            if d.label.trim().is_empty() {
                return Err(SchemaError::field("detections.label", "empty label"));
            }
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(SchemaError::field(
                    "detections.confidence",
                    format!("{} outside [0, 1]", d.confidence),
                ));
            }
        }
        Ok(())
    }
}

/// One photo sequence with (for gold data) its five-sentence story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorySample {
    pub sequence_id: String,
    pub images: Vec<ImageAnnotation>,
    #[serde(default)]
    pub sentences: Vec<String>,
}

impl StorySample {
    /// Checks the record shape. Samples without sentences are accepted as
    /// generation inputs; samples with sentences must have one per image.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.sequence_id.is_empty() {
            return Err(SchemaError::field("sequence_id", "empty"));
        }
        if self.images.len() != IMAGES_PER_SEQUENCE {
            return Err(SchemaError::ImageCount {
                expected: IMAGES_PER_SEQUENCE,
                found: self.images.len(),
            });
        }
        for image in &self.images {
            image.validate()?;
        }
        if !self.sentences.is_empty() && self.sentences.len() != IMAGES_PER_SEQUENCE {
            return Err(SchemaError::SentenceCount {
                expected: IMAGES_PER_SEQUENCE,
                found: self.sentences.len(),
            });
        }
        Ok(())
    }

    pub fn is_gold(&self) -> bool {
        self.sentences.len() == IMAGES_PER_SEQUENCE
    }
}

/// A reading-comprehension paragraph with the questions asked about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub context: String,
    pub questions: Vec<String>,
}

impl QaPair {
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.context.trim().is_empty() {
            return Err(SchemaError::field("context", "empty"));
        }
        if self.questions.iter().any(|q| q.trim().is_empty()) {
            return Err(SchemaError::field("questions", "empty question"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn image(conf: f64) -> ImageAnnotation {
        ImageAnnotation {
            image_id: "i".to_string(),
            detections: vec![Detection {
                label: "dog".to_string(),
                confidence: conf,
            }],
        }
    }

    #[test]
    fn wrong_image_count_is_rejected() {
        let s = StorySample {
            sequence_id: "s".to_string(),
            images: vec![image(0.5); 4],
            sentences: Vec::new(),
        };
        assert_eq!(
            s.validate(),
            Err(SchemaError::ImageCount {
                expected: 5,
                found: 4
            })
        );
    }

    #[test]
    fn confidence_out_of_range_is_rejected() {
        assert!(image(1.5).validate().is_err());
        assert!(image(1.0).validate().is_ok());
    }

    #[test]
    fn partial_story_is_rejected() {
        let s = StorySample {
            sequence_id: "s".to_string(),
            images: vec![image(0.5); 5],
            sentences: vec!["a".to_string(); 3],
        };
        assert!(matches!(s.validate(), Err(SchemaError::SentenceCount { .. })));
    }
}
