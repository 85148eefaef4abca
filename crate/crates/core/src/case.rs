//! Network case model and readers for MATPOWER-style and CSV case files.
//!
//! Only the columns the DC model needs are read: bus id, type and voltage
//! angle from the bus table, and from/to, resistance, reactance and status
//! from the branch table. Everything else in a row is accepted and ignored.
//! External bus ids are remapped to a dense, 0-based index in file order.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

const IEEE118: &str = include_str!("../data/ieee118.m");
const IEEE300: &str = include_str!("../data/ieee300.m");

// MATPOWER column positions (0-based).
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const VA: usize = 8;
const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const BR_STATUS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Generator,
    Load,
}

impl BusKind {
    /// MATPOWER bus type code. Isolated buses (type 4) are read as loads.
    fn from_code(bus: i64, code: i64) -> Result<Self> {
        match code {
            1 | 4 => Ok(BusKind::Load),
            2 => Ok(BusKind::Generator),
            3 => Ok(BusKind::Slack),
            kind => Err(Error::UnsupportedBusType { bus, kind }),
        }
    }

    fn code(self) -> i64 {
        match self {
            BusKind::Load => 1,
            BusKind::Generator => 2,
            BusKind::Slack => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bus {
    pub external_id: i64,
    pub dense_index: usize,
    pub kind: BusKind,
    /// Voltage angle from the case file, in radians.
    pub base_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub reactance_x: f64,
    /// Parsed for completeness; the DC model ignores it.
    pub resistance_r: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkCase {
    pub name: String,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
}

/// One bus row as read from a file, before validation.
#[derive(Debug, Clone, Copy)]
pub struct RawBus {
    pub id: i64,
    pub kind: i64,
    pub angle_deg: f64,
}

/// One branch row as read from a file, before validation.
#[derive(Debug, Clone, Copy)]
pub struct RawBranch {
    pub from: i64,
    pub to: i64,
    pub r: f64,
    pub x: f64,
    pub status: f64,
}

impl NetworkCase {
    /// Validates raw tables and builds the dense-index model.
    ///
    /// Out-of-service branches are dropped; their buses stay in the model.
    pub fn from_tables(name: &str, buses: &[RawBus], branches: &[RawBranch]) -> Result<Self> {
        if buses.is_empty() {
            return Err(Error::EmptyCase);
        }
        let mut index = HashMap::with_capacity(buses.len());
        let mut model_buses = Vec::with_capacity(buses.len());
        for (dense_index, raw) in buses.iter().enumerate() {
            if index.insert(raw.id, dense_index).is_some() {
                return Err(Error::DuplicateBus(raw.id));
            }
            if !raw.angle_deg.is_finite() {
                return Err(Error::NonFinite("bus angle"));
            }
            model_buses.push(Bus {
                external_id: raw.id,
                dense_index,
                kind: BusKind::from_code(raw.id, raw.kind)?,
                base_angle: raw.angle_deg.to_radians(),
            });
        }

        let mut model_branches = Vec::with_capacity(branches.len());
        for (k, raw) in branches.iter().enumerate() {
            let lookup = |bus: i64| {
                index
                    .get(&bus)
                    .copied()
                    .ok_or(Error::UnknownBus { branch: k, bus })
            };
            let from_bus = lookup(raw.from)?;
            let to_bus = lookup(raw.to)?;
            if from_bus == to_bus {
                return Err(Error::SelfLoop {
                    branch: k,
                    bus: raw.from,
                });
            }
            if raw.status == 0.0 {
                continue;
            }
            if !(raw.x > 0.0 && raw.x.is_finite()) {
                return Err(Error::NonPositiveReactance {
                    branch: k,
                    from: raw.from,
                    to: raw.to,
                    x: raw.x,
                });
            }
            model_branches.push(Branch {
                from_bus,
                to_bus,
                reactance_x: raw.x,
                resistance_r: raw.r,
                in_service: true,
            });
        }

        let case = NetworkCase {
            name: name.to_string(),
            buses: model_buses,
            branches: model_branches,
        };
        case.check_slack()?;
        Ok(case)
    }

    fn check_slack(&self) -> Result<()> {
        if !self.buses.iter().any(|b| b.kind == BusKind::Slack) {
            return Err(Error::NoSlack);
        }
        for component in connected_components(self) {
            let mut slack = component
                .iter()
                .filter(|&&i| self.buses[i].kind == BusKind::Slack);
            if let (Some(_), Some(&second)) = (slack.next(), slack.next()) {
                return Err(Error::MultipleSlack(self.buses[second].external_id));
            }
        }
        Ok(())
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| b.in_service)
    }

    pub fn base_angles(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.base_angle).collect()
    }

    /// Writes the model back out as a minimal MATPOWER case.
    ///
    /// Angles are written with the shortest decimal that parses back to the
    /// same radian value, so `parse_case(&case.to_matpower())` reproduces
    /// the model exactly.
    pub fn to_matpower(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "function mpc = {}", self.name);
        out.push_str("mpc.version = '2';\nmpc.baseMVA = 100;\n\n");
        out.push_str(
            "%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n",
        );
        out.push_str("mpc.bus = [\n");
        for bus in &self.buses {
            let _ = writeln!(
                out,
                "\t{}\t{}\t0\t0\t0\t0\t1\t1\t{}\t0\t1\t1.06\t0.94;",
                bus.external_id,
                bus.kind.code(),
                degrees_literal(bus.base_angle)
            );
        }
        out.push_str("];\n\n%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n");
        out.push_str("mpc.branch = [\n");
        for br in &self.branches {
            let _ = writeln!(
                out,
                "\t{}\t{}\t{:?}\t{:?}\t0\t0\t0\t0\t0\t0\t{}\t-360\t360;",
                self.buses[br.from_bus].external_id,
                self.buses[br.to_bus].external_id,
                br.resistance_r,
                br.reactance_x,
                u8::from(br.in_service)
            );
        }
        out.push_str("];\n");
        out
    }
}

/// Shortest decimal degree string that converts back to exactly `rad`.
fn degrees_literal(rad: f64) -> String {
    let deg = rad.to_degrees();
    let (mut up, mut down) = (deg, deg);
    for _ in 0..16 {
        for candidate in [up, down] {
            let text = format!("{candidate:?}");
            if text.parse::<f64>().map(f64::to_radians) == Ok(rad) {
                return text;
            }
        }
        up = up.next_up();
        down = down.next_down();
    }
    format!("{deg:?}")
}

/// Parses a MATPOWER case (`mpc.bus` and `mpc.branch` blocks).
pub fn parse_case(source_text: &str) -> Result<NetworkCase> {
    let name = source_text
        .lines()
        .find_map(|line| {
            let rest = line.trim().strip_prefix("function")?;
            Some(rest.split('=').nth(1)?.trim().to_string())
        })
        .filter(|n| !n.is_empty())
        .unwrap_or_else(|| "case".to_string());

    let bus_rows = matrix_block(source_text, "bus")?;
    let branch_rows = matrix_block(source_text, "branch")?;

    let buses = bus_rows
        .iter()
        .map(|(line, row)| {
            let cols = Columns::new("bus", *line, row, VA + 1)?;
            Ok(RawBus {
                id: cols.integer(BUS_I)?,
                kind: cols.integer(BUS_TYPE)?,
                angle_deg: row[VA],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let branches = branch_rows
        .iter()
        .map(|(line, row)| {
            let cols = Columns::new("branch", *line, row, BR_STATUS + 1)?;
            Ok(RawBranch {
                from: cols.integer(F_BUS)?,
                to: cols.integer(T_BUS)?,
                r: row[BR_R],
                x: row[BR_X],
                status: row[BR_STATUS],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    NetworkCase::from_tables(&name, &buses, &branches)
}

struct Columns<'a> {
    table: &'static str,
    line: usize,
    row: &'a [f64],
}

impl<'a> Columns<'a> {
    fn new(table: &'static str, line: usize, row: &'a [f64], min: usize) -> Result<Self> {
        if row.len() < min {
            return Err(Error::MalformedRow {
                table,
                line,
                reason: format!("expected at least {min} columns, found {}", row.len()),
            });
        }
        Ok(Columns { table, line, row })
    }

    fn integer(&self, col: usize) -> Result<i64> {
        let v = self.row[col];
        if v.fract() != 0.0 || !v.is_finite() {
            return Err(Error::MalformedRow {
                table: self.table,
                line: self.line,
                reason: format!("column {} must be an integer, found {v}", col + 1),
            });
        }
        Ok(v as i64)
    }
}

/// Extracts the numeric rows of `mpc.<table> = [ ... ];` with their 1-based
/// source line numbers.
fn matrix_block(text: &str, table: &'static str) -> Result<Vec<(usize, Vec<f64>)>> {
    let key = format!("mpc.{table}");
    let mut search = 0;
    let open = loop {
        let pos = text[search..]
            .find(&key)
            .map(|p| p + search)
            .ok_or(Error::MissingTable(table))?;
        let after = text[pos + key.len()..].trim_start();
        if let Some(rest) = after.strip_prefix('=') {
            if rest.trim_start().starts_with('[') {
                break pos + text[pos..].find('[').unwrap_or(0) + 1;
            }
        }
        search = pos + key.len();
    };
    let close = text[open..]
        .find(']')
        .map(|p| p + open)
        .ok_or(Error::MalformedRow {
            table,
            line: line_of(text, open),
            reason: "unterminated matrix".into(),
        })?;

    let mut rows = Vec::new();
    let first_line = line_of(text, open);
    for (offset, raw_line) in text[open..close].lines().enumerate() {
        let line = first_line + offset;
        let content = raw_line.split('%').next().unwrap_or("");
        for chunk in content.split(';') {
            let tokens: Vec<&str> = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect();
            if tokens.is_empty() {
                continue;
            }
            let row = tokens
                .iter()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::MalformedRow {
                        table,
                        line,
                        reason: format!("not a number: `{t}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((line, row));
        }
    }
    Ok(rows)
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte].matches('\n').count() + 1
}

/// Parses the CSV case variant: `id,type,angle_deg` bus rows and
/// `from,to,r,x,status` branch rows. A header row is optional.
pub fn parse_csv_case(name: &str, bus_csv: &str, branch_csv: &str) -> Result<NetworkCase> {
    let buses = csv_rows(bus_csv, "bus", 3)?
        .into_iter()
        .map(|(line, row)| {
            let cols = Columns::new("bus", line, &row, 3)?;
            Ok(RawBus {
                id: cols.integer(0)?,
                kind: cols.integer(1)?,
                angle_deg: row[2],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let branches = csv_rows(branch_csv, "branch", 5)?
        .into_iter()
        .map(|(line, row)| {
            let cols = Columns::new("branch", line, &row, 5)?;
            Ok(RawBranch {
                from: cols.integer(0)?,
                to: cols.integer(1)?,
                r: row[2],
                x: row[3],
                status: row[4],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkCase::from_tables(name, &buses, &branches)
}

fn csv_rows(text: &str, table: &'static str, min: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            table,
            line,
            reason: e.to_string(),
        })?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                let line = record.position().map_or(line, |p| p.line() as usize);
                if row.len() < min {
                    return Err(Error::MalformedRow {
                        table,
                        line,
                        reason: format!("expected at least {min} columns, found {}", row.len()),
                    });
                }
                rows.push((line, row));
            }
            // header
            Err(_) if k == 0 => continue,
            Err(e) => {
                return Err(Error::MalformedRow {
                    table,
                    line: record.position().map_or(line, |p| p.line() as usize),
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(rows)
}

/// Source text of a bundled IEEE case, by name.
pub fn builtin(name: &str) -> Option<&'static str> {
    match name.to_ascii_lowercase().as_str() {
        "ieee118" | "case118" => Some(IEEE118),
        "ieee300" | "case300" => Some(IEEE300),
        _ => None,
    }
}

/// Loads a case by bundled name (`ieee118`, `ieee300`) or by path.
///
/// `.csv` paths name the bus table; the branch table is read from
/// `branch.csv` next to it. Any other extension is read as MATPOWER.
pub fn load_case(case: &str) -> Result<NetworkCase> {
    if let Some(text) = builtin(case) {
        return parse_case(text);
    }
    let path = Path::new(case);
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
    };
    if path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"))
    {
        let branch_path = path.with_file_name("branch.csv");
        let name = path
            .parent()
            .and_then(Path::file_name)
            .and_then(|n| n.to_str())
            .unwrap_or("case");
        parse_csv_case(name, &read(path)?, &read(&branch_path)?)
    } else {
        parse_case(&read(path)?)
    }
}

/// Islands of the network induced by in-service branches.
///
/// Each component is sorted; components are ordered by their smallest bus.
pub fn connected_components(case: &NetworkCase) -> Vec<Vec<usize>> {
    let n = case.bus_count();
    let mut adjacency = vec![Vec::new(); n];
    for br in case.in_service_branches() {
        adjacency[br.from_bus].push(br.to_bus);
        adjacency[br.to_bus].push(br.from_bus);
    }
    let mut label = vec![usize::MAX; n];
    let mut components = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(bus) = queue.pop_front() {
            for &next in &adjacency[bus] {
                if label[next] == usize::MAX {
                    label[next] = id;
                    members.push(next);
                    queue.push_back(next);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = "function mpc = two_bus
mpc.bus = [
    1   3   0   0   0   0   1   1   5.7295779513082321   230 1   1.1 0.9;
    2   1   0   0   0   0   1   1   0   230 1   1.1 0.9;
];
mpc.branch = [
    1   2   0.01    0.5 0   0   0   0   0   0   1   -360    360;
];
";

    #[test]
    fn parses_minimal_case() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.name, "two_bus");
        assert_eq!(case.bus_count(), 2);
        assert_eq!(case.branches.len(), 1);
        assert_eq!(case.branches[0].reactance_x, 0.5);
        assert_eq!(case.buses[0].kind, BusKind::Slack);
        assert!((case.buses[0].base_angle - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_bus() {
        let text = TWO_BUS.replace("1   2   0.01", "1   999   0.01");
        let err = parse_case(&text).unwrap_err();
        assert_eq!(
            err,
            Error::UnknownBus {
                branch: 0,
                bus: 999
            }
        );
        assert!(err.to_string().contains("unknown bus"));
    }

    #[test]
    fn rejects_duplicate_bus() {
        let text = TWO_BUS.replace("    2   1   0", "    1   1   0");
        assert_eq!(parse_case(&text).unwrap_err(), Error::DuplicateBus(1));
    }

    #[test]
    fn rejects_non_positive_reactance_in_service_only() {
        let bad = TWO_BUS.replace("0.01    0.5", "0.01    -0.5");
        assert!(matches!(
            parse_case(&bad),
            Err(Error::NonPositiveReactance { .. })
        ));
        let out_of_service = bad.replace("0   0   1   -360", "0   0   0   -360");
        let case = parse_case(&out_of_service).unwrap();
        assert!(case.branches.is_empty());
        assert_eq!(case.bus_count(), 2);
    }

    #[test]
    fn rejects_short_and_garbled_rows() {
        let short = TWO_BUS.replace("0   0   0   0   0   0   1   -360    360", "");
        assert!(matches!(
            parse_case(&short),
            Err(Error::MalformedRow {
                table: "branch",
                ..
            })
        ));
        let garbled = TWO_BUS.replace("0.01    0.5", "0.01    abc");
        let err = parse_case(&garbled).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 7, .. }), "{err}");
    }

    #[test]
    fn requires_slack() {
        let text = TWO_BUS.replace("    1   3   0", "    1   2   0");
        assert_eq!(parse_case(&text).unwrap_err(), Error::NoSlack);
    }

    #[test]
    fn remaps_sparse_ids_in_file_order() {
        let buses = [
            RawBus {
                id: 40,
                kind: 3,
                angle_deg: 0.0,
            },
            RawBus {
                id: 7,
                kind: 1,
                angle_deg: 0.0,
            },
            RawBus {
                id: 1000,
                kind: 2,
                angle_deg: 0.0,
            },
        ];
        let branches = [
            RawBranch {
                from: 1000,
                to: 40,
                r: 0.0,
                x: 0.2,
                status: 1.0,
            },
            RawBranch {
                from: 7,
                to: 1000,
                r: 0.0,
                x: 0.1,
                status: 1.0,
            },
        ];
        let case = NetworkCase::from_tables("sparse", &buses, &branches).unwrap();
        let dense: Vec<usize> = case.buses.iter().map(|b| b.dense_index).collect();
        assert_eq!(dense, vec![0, 1, 2]);
        assert_eq!((case.branches[0].from_bus, case.branches[0].to_bus), (2, 0));
        assert_eq!((case.branches[1].from_bus, case.branches[1].to_bus), (1, 2));
    }

    #[test]
    fn components_of_small_cases() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(connected_components(&case), vec![vec![0, 1]]);

        let buses: Vec<RawBus> = (0..4)
            .map(|i| RawBus {
                id: i,
                kind: if i == 0 { 3 } else { 1 },
                angle_deg: 0.0,
            })
            .collect();
        let branches = [
            RawBranch {
                from: 0,
                to: 1,
                r: 0.0,
                x: 1.0,
                status: 1.0,
            },
            RawBranch {
                from: 2,
                to: 3,
                r: 0.0,
                x: 1.0,
                status: 1.0,
            },
        ];
        let case = NetworkCase::from_tables("split", &buses, &branches).unwrap();
        assert_eq!(connected_components(&case), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn csv_variant_with_and_without_header() {
        let bus = "id,type,angle_deg\n1,3,5.7295779513082321\n2,1,0\n";
        let branch = "1,2,0.01,0.5,1\n";
        let case = parse_csv_case("csv", bus, branch).unwrap();
        let mpc = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.buses, mpc.buses);
        assert_eq!(case.branches, mpc.branches);
    }

    #[test]
    fn degrees_literal_round_trips() {
        for deg in [5.95, -13.2, 0.0, 1e-7, 33.333333333333336, -179.99] {
            let rad = f64::to_radians(deg);
            let text = degrees_literal(rad);
            assert_eq!(text.parse::<f64>().unwrap().to_radians(), rad);
        }
    }

    #[test]
    fn builtin_names() {
        assert!(builtin("ieee118").is_some());
        assert!(builtin("CASE300").is_some());
        assert!(builtin("ieee14").is_none());
    }
}
