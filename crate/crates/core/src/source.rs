use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four kinds of textual metadata attached to a web video.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Title,
    Description,
    Tags,
    Channel,
}

impl Source {
    /// Fixed order used by the binary formats and checkpoints.
    pub const ALL: [Source; 4] = [Source::Title, Source::Description, Source::Tags, Source::Channel];

    pub fn name(self) -> &'static str {
        match self {
            Source::Title => "title",
            Source::Description => "description",
            Source::Tags => "tags",
            Source::Channel => "channel",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u8) -> Result<Source> {
        Source::ALL
            .get(i as usize)
            .copied()
            .ok_or_else(|| Error::UnknownSource(format!("#{i}")))
    }

    /// Parses a comma-separated list such as `title,tags`. Rejects empty lists
    /// and duplicates.
    pub fn parse_list(s: &str) -> Result<Vec<Source>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let src: Source = part.parse()?;
            if out.contains(&src) {
                return Err(Error::Invalid(format!("source `{part}` listed twice")));
            }
            out.push(src);
        }
        if out.is_empty() {
            return Err(Error::Invalid("empty source list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "title" | "titles" => Ok(Source::Title),
            "description" | "descriptions" => Ok(Source::Description),
            "tags" | "tag" => Ok(Source::Tags),
            "channel" | "channels" => Ok(Source::Channel),
            other => Err(Error::UnknownSource(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists() {
        assert_eq!(
            Source::parse_list("title, tags").unwrap(),
            vec![Source::Title, Source::Tags]
        );
        assert!(Source::parse_list("title,title").is_err());
        assert!(Source::parse_list("").is_err());
        assert!(matches!(
            Source::parse_list("thumbnail"),
            Err(Error::UnknownSource(_))
        ));
    }

    #[test]
    fn index_round_trip() {
        for s in Source::ALL {
            assert_eq!(Source::from_index(s.index() as u8).unwrap(), s);
        }
        assert!(Source::from_index(4).is_err());
    }
}
