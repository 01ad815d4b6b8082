use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Leg, PlanError, PlanResult, Sleeve};

/// Source of the visual facts the planner needs. Answers must stay stable
/// within one planning episode.
pub trait AttributeOracle {
    fn category(&mut self) -> PlanResult<String>;
    fn has_hood(&mut self) -> PlanResult<bool>;
    fn sleeve(&mut self) -> PlanResult<Sleeve>;
    fn leg(&mut self) -> PlanResult<Leg>;
    fn part_at_target(&mut self, part: &str) -> PlanResult<bool>;
}

fn parse_bool(key: &str, s: &str) -> PlanResult<bool> {
    match s {
        "true" | "yes" => Ok(true),
        "false" | "no" => Ok(false),
        other => Err(PlanError::OracleUnavailable(format!("{key}: not a boolean: {other:?}"))),
    }
}

fn parse_sleeve(s: &str) -> PlanResult<Sleeve> {
    Sleeve::parse(s).ok_or_else(|| PlanError::OracleUnavailable(format!("sleeve: bad answer {s:?}")))
}

fn parse_leg(s: &str) -> PlanResult<Leg> {
    Leg::parse(s).ok_or_else(|| PlanError::OracleUnavailable(format!("leg: bad answer {s:?}")))
}

/// Answers from a fixed `key = value` table.
///
/// ```text
/// category = shirt
/// has_hood = false
/// sleeve = long
/// leg = not_applicable
/// part_at_target.sleeve_left = false
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedOracle {
    answers: BTreeMap<String, String>,
}

impl ScriptedOracle {
    pub fn parse(text: &str) -> PlanResult<Self> {
        let mut answers = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                PlanError::OracleUnavailable(format!("script line {}: expected `key = value`", i + 1))
            })?;
            answers.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { answers })
    }

    pub fn from_file(path: impl AsRef<Path>) -> crate::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(Self::parse(&text)?)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self {
            answers: pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    pub fn answers(&self) -> &BTreeMap<String, String> {
        &self.answers
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.answers.insert(key.to_string(), value.to_string());
    }

    fn get(&self, key: &str) -> PlanResult<&str> {
        self.answers
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| PlanError::OracleUnavailable(format!("script has no answer for {key:?}")))
    }
}

impl AttributeOracle for ScriptedOracle {
    fn category(&mut self) -> PlanResult<String> {
        self.get("category").map(str::to_string)
    }

    fn has_hood(&mut self) -> PlanResult<bool> {
        parse_bool("has_hood", self.get("has_hood")?)
    }

    fn sleeve(&mut self) -> PlanResult<Sleeve> {
        parse_sleeve(self.get("sleeve")?)
    }

    fn leg(&mut self) -> PlanResult<Leg> {
        parse_leg(self.get("leg")?)
    }

    fn part_at_target(&mut self, part: &str) -> PlanResult<bool> {
        let key = format!("part_at_target.{part}");
        parse_bool(&key, self.get(&key)?)
    }
}

#[derive(Serialize)]
struct Request<'a> {
    query: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    part: Option<&'a str>,
}

#[derive(Deserialize)]
struct Response {
    answer: String,
}

/// Line-delimited JSON over TCP: one `{"query", "part"}` request per line,
/// one `{"answer"}` response per line.
pub struct RemoteOracle {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl RemoteOracle {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> PlanResult<Self> {
        let unavailable = |e: std::io::Error| PlanError::OracleUnavailable(e.to_string());
        let addr = addr
            .to_socket_addrs()
            .map_err(unavailable)?
            .next()
            .ok_or_else(|| PlanError::OracleUnavailable("address did not resolve".into()))?;
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(unavailable)?;
        stream.set_read_timeout(Some(timeout)).map_err(unavailable)?;
        stream.set_write_timeout(Some(timeout)).map_err(unavailable)?;
        let writer = stream.try_clone().map_err(unavailable)?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
        })
    }

    fn ask(&mut self, query: &str, part: Option<&str>) -> PlanResult<String> {
        let unavailable = |e: std::io::Error| PlanError::OracleUnavailable(format!("{query}: {e}"));
        let mut line = serde_json::to_string(&Request { query, part }).expect("request serializes");
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(unavailable)?;
        let mut reply = String::new();
        let n = self.reader.read_line(&mut reply).map_err(unavailable)?;
        if n == 0 {
            return Err(PlanError::OracleUnavailable(format!("{query}: connection closed")));
        }
        let r: Response = serde_json::from_str(&reply)
            .map_err(|e| PlanError::OracleUnavailable(format!("{query}: bad response: {e}")))?;
        Ok(r.answer)
    }
}

impl AttributeOracle for RemoteOracle {
    fn category(&mut self) -> PlanResult<String> {
        self.ask("category", None)
    }

    fn has_hood(&mut self) -> PlanResult<bool> {
        parse_bool("has_hood", &self.ask("has_hood", None)?)
    }

    fn sleeve(&mut self) -> PlanResult<Sleeve> {
        parse_sleeve(&self.ask("sleeve", None)?)
    }

    fn leg(&mut self) -> PlanResult<Leg> {
        parse_leg(&self.ask("leg", None)?)
    }

    fn part_at_target(&mut self, part: &str) -> PlanResult<bool> {
        parse_bool("part_at_target", &self.ask("part_at_target", Some(part))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn scripted_parsing() {
        let mut o = ScriptedOracle::parse(
            "# a comment\ncategory = shirt\nhas_hood = no\nsleeve=long\npart_at_target.sleeve_left = true\n",
        )
        .unwrap();
        assert_eq!(o.category().unwrap(), "shirt");
        assert!(!o.has_hood().unwrap());
        assert_eq!(o.sleeve().unwrap(), Sleeve::Long);
        assert!(o.part_at_target("sleeve_left").unwrap());
        assert!(matches!(o.leg(), Err(PlanError::OracleUnavailable(_))));
        assert!(ScriptedOracle::parse("category shirt").is_err());
    }

    fn serve(answers: &'static [(&'static str, &'static str)], stall: bool) -> std::net::SocketAddr {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut w = stream.try_clone().unwrap();
            for line in BufReader::new(stream).lines() {
                let line = line.unwrap();
                if stall {
                    std::thread::sleep(Duration::from_millis(500));
                    return;
                }
                let v: serde_json::Value = serde_json::from_str(&line).unwrap();
                let key = match v.get("part").and_then(|p| p.as_str()) {
                    Some(p) => format!("{}.{p}", v["query"].as_str().unwrap()),
                    None => v["query"].as_str().unwrap().to_string(),
                };
                let ans = answers.iter().find(|(k, _)| *k == key).map(|(_, a)| *a).unwrap_or("?");
                writeln!(w, "{}", serde_json::json!({ "answer": ans })).unwrap();
            }
        });
        addr
    }

    #[test]
    fn remote_round_trip() {
        let addr = serve(
            &[("category", "pants"), ("leg", "long"), ("part_at_target.legs", "false")],
            false,
        );
        let mut o = RemoteOracle::connect(addr, Duration::from_secs(2)).unwrap();
        assert_eq!(o.category().unwrap(), "pants");
        assert_eq!(o.leg().unwrap(), Leg::Long);
        assert!(!o.part_at_target("legs").unwrap());
        assert!(matches!(o.has_hood(), Err(PlanError::OracleUnavailable(_))));
    }

    #[test]
    fn remote_timeout() {
        let addr = serve(&[], true);
        let mut o = RemoteOracle::connect(addr, Duration::from_millis(100)).unwrap();
        assert!(matches!(o.category(), Err(PlanError::OracleUnavailable(_))));
    }
}
