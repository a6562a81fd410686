use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Link, MulticastInstance};
use crate::error::{Error, Result};

/// On-disk topology document.
///
/// ```json
/// {"nodes": ["s", "t"], "links": [{"id": 0, "from": "s", "to": "t"}],
///  "source": "s", "sinks": ["t"], "rate": 1}
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDocument {
    pub nodes: Vec<String>,
    pub links: Vec<TopologyLink>,
    pub source: String,
    pub sinks: Vec<String>,
    pub rate: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyLink {
    pub id: i64,
    pub from: String,
    pub to: String,
}

pub fn parse_topology(text: &str) -> Result<MulticastInstance> {
    let doc: TopologyDocument = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    doc.into_instance()
}

impl TopologyDocument {
    pub fn into_instance(self) -> Result<MulticastInstance> {
        let invalid = |location: String, message: String| Error::InvalidTopology { location, message };
        let index: HashMap<&str, usize> =
            self.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let lookup = |name: &str, location: String| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| invalid(location, format!("undeclared node '{name}'")))
        };

        let count = self.links.len();
        let mut slots: Vec<Option<Link>> = vec![None; count];
        for (i, link) in self.links.iter().enumerate() {
            let id = usize::try_from(link.id)
                .ok()
                .filter(|&id| id < count)
                .ok_or_else(|| invalid(format!("links[{i}].id"), format!("id {} outside 0..{count}", link.id)))?;
            if slots[id].is_some() {
                return Err(invalid(format!("links[{i}].id"), format!("duplicate link id {id}")));
            }
            slots[id] = Some(Link {
                tail: lookup(&link.from, format!("links[{i}].from"))?,
                head: lookup(&link.to, format!("links[{i}].to"))?,
            });
        }
        let links = slots.into_iter().map(|l| l.expect("ids are dense")).collect();
        let source = lookup(&self.source, "source".into())?;
        let sinks = self
            .sinks
            .iter()
            .enumerate()
            .map(|(i, t)| lookup(t, format!("sinks[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        if self.rate < 1 || self.rate > u32::MAX as i64 {
            return Err(invalid("rate".into(), format!("rate {} must be a positive integer", self.rate)));
        }
        MulticastInstance::new(self.nodes, links, source, sinks, self.rate as u32)
    }
}

impl From<&MulticastInstance> for TopologyDocument {
    fn from(g: &MulticastInstance) -> Self {
        TopologyDocument {
            nodes: g.node_names().to_vec(),
            links: g
                .links()
                .iter()
                .enumerate()
                .map(|(id, l)| TopologyLink {
                    id: id as i64,
                    from: g.node_name(l.tail).to_string(),
                    to: g.node_name(l.head).to_string(),
                })
                .collect(),
            source: g.node_name(g.source()).to_string(),
            sinks: g.sinks().iter().map(|&t| g.node_name(t).to_string()).collect(),
            rate: g.rate() as i64,
        }
    }
}

impl MulticastInstance {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&TopologyDocument::from(self)).expect("serializable");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse_topology(text)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        parse_topology(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::fixtures::butterfly;

    #[test]
    fn roundtrip_preserves_instance() {
        let g = butterfly();
        assert_eq!(parse_topology(&g.to_json()).unwrap(), g);
    }

    #[test]
    fn links_may_be_listed_out_of_order() {
        let text = r#"{"nodes":["s","a","t"],"links":[{"id":1,"from":"a","to":"t"},{"id":0,"from":"s","to":"a"}],
                       "source":"s","sinks":["t"],"rate":1}"#;
        let g = parse_topology(text).unwrap();
        assert_eq!(g.node_name(g.link(0).tail), "s");
        assert_eq!(g.max_flow(0, 2), 1);
    }

    #[test]
    fn errors_carry_locations() {
        let rate0 = r#"{"nodes":["s","t"],"links":[{"id":0,"from":"s","to":"t"}],"source":"s","sinks":["t"],"rate":0}"#;
        let err = parse_topology(rate0).unwrap_err().to_string();
        assert!(err.contains("rate"), "{err}");

        let dangling = r#"{"nodes":["s","t"],"links":[{"id":0,"from":"s","to":"x"}],"source":"s","sinks":["t"],"rate":1}"#;
        let err = parse_topology(dangling).unwrap_err().to_string();
        assert!(err.contains("links[0].to") && err.contains("'x'"), "{err}");

        let no_sinks = r#"{"nodes":["s","t"],"links":[],"source":"s","sinks":[],"rate":1}"#;
        assert!(parse_topology(no_sinks).unwrap_err().to_string().contains("sinks"));

        let sparse = r#"{"nodes":["s","t"],"links":[{"id":3,"from":"s","to":"t"}],"source":"s","sinks":["t"],"rate":1}"#;
        assert!(parse_topology(sparse).unwrap_err().to_string().contains("links[0].id"));

        let garbage = "{\"nodes\": [";
        assert!(matches!(parse_topology(garbage), Err(Error::Parse(_))));
    }
}
