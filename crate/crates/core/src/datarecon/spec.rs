use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::binding::{bind_concepts, Binding, BindingKind, UnboundTag};
use super::expr::{parse_decimal, round_output};
use super::format::{CompiledDecomposition, FormatDb, FormatDecomposition, FormatError, FormatKey};
use super::tables::LookupTable;
use super::units::UnitConversion;
use super::{DataReconError, MediationDb};
use crate::matchmaker::MatchConfig;
use crate::ontology::Ontology;
use crate::procmodel::TagSpec;
use crate::registry::OperationRef;

/// Flat tag -> value document.
pub type Message = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    /// Loads the source value into the working register.
    Copy {
        source: String,
    },
    /// Splits a source value into part values.
    Parse {
        source: String,
        format: FormatKey,
    },
    /// Rebuilds the register from collected part values.
    Assemble {
        format: FormatKey,
    },
    Convert {
        from: String,
        to: String,
    },
    Lookup {
        table: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagTransform {
    pub tag: String,
    pub binding: BindingKind,
    pub sources: Vec<String>,
    pub steps: Vec<Step>,
}

impl TagTransform {
    fn is_identity(&self) -> bool {
        matches!(self.steps.as_slice(), [Step::Copy { source }] if *source == self.tag)
    }
}

/// Self-contained recipe producing the inputs of one operation; carries
/// every decomposition, conversion and table it references.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformationSpec {
    pub id: String,
    pub operation: OperationRef,
    pub inputs: Vec<TagTransform>,
    #[serde(default)]
    pub unbound: Vec<UnboundTag>,
    #[serde(default)]
    pub decompositions: Vec<FormatDecomposition>,
    #[serde(default)]
    pub conversions: Vec<UnitConversion>,
    #[serde(default)]
    pub tables: Vec<LookupTable>,
}

impl TransformationSpec {
    pub fn from_json(text: &str) -> Result<Self, DataReconError> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| DataReconError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// True when every input is a same-name copy.
    pub fn is_identity(&self) -> bool {
        self.unbound.is_empty() && self.inputs.iter().all(TagTransform::is_identity)
    }

    pub fn is_complete(&self) -> bool {
        self.unbound.is_empty()
    }

    /// Target tags in declaration order, bound and unbound.
    pub fn target_tags(&self) -> Vec<&str> {
        self.inputs
            .iter()
            .map(|t| t.tag.as_str())
            .chain(self.unbound.iter().map(|u| u.tag.as_str()))
            .collect()
    }

    pub fn validate(&self) -> Result<(), DataReconError> {
        let invalid = |m: String| Err(DataReconError::InvalidSpec(m));
        let mut seen = BTreeSet::new();
        for tag in self.target_tags() {
            if !seen.insert(tag) {
                return invalid(format!("target tag `{tag}` appears more than once"));
            }
        }
        let formats = FormatDb::from_decompositions(self.decompositions.clone())?;
        let conversions: BTreeSet<(&str, &str)> = self
            .conversions
            .iter()
            .map(|c| (c.from.as_str(), c.to.as_str()))
            .collect();
        for c in &self.conversions {
            c.compile()?;
        }
        let tables: BTreeSet<&str> = self.tables.iter().map(|t| t.id.as_str()).collect();
        for t in &self.inputs {
            let mut loaded = false;
            for step in &t.steps {
                match step {
                    Step::Copy { .. } => loaded = true,
                    Step::Parse { format, .. } => {
                        formats.require(format)?;
                    }
                    Step::Assemble { format } => {
                        formats.require(format)?;
                        loaded = true;
                    }
                    Step::Convert { from, to } => {
                        if !conversions.contains(&(from.as_str(), to.as_str())) {
                            return invalid(format!(
                                "tag `{}`: missing conversion {from} -> {to}",
                                t.tag
                            ));
                        }
                    }
                    Step::Lookup { table } => {
                        if !tables.contains(table.as_str()) {
                            return invalid(format!(
                                "tag `{}`: missing lookup table `{table}`",
                                t.tag
                            ));
                        }
                    }
                }
                if matches!(step, Step::Convert { .. } | Step::Lookup { .. }) && !loaded {
                    return invalid(format!("tag `{}`: step before any value is loaded", t.tag));
                }
            }
            if !loaded {
                return invalid(format!("tag `{}` produces no value", t.tag));
            }
        }
        Ok(())
    }
}

/// Parse/Assemble steps reconciling the formats of a binding, or a single
/// Copy when no format change is needed.
pub fn derive_format_steps(
    binding: &Binding,
    formats: &FormatDb,
) -> Result<Vec<Step>, FormatError> {
    let target = &binding.target;
    let needs_assembly = binding.kind == BindingKind::Composite
        || match (&binding.sources[..], &target.format) {
            ([src], Some(tf)) => src.format.as_ref().is_some_and(|sf| sf != tf),
            _ => false,
        };
    if !needs_assembly {
        return Ok(vec![Step::Copy {
            source: binding.sources[0].tag.clone(),
        }]);
    }
    let target_key = FormatKey::new(
        &target.concept,
        target.format.as_deref().unwrap_or_default(),
    );
    let assembled = formats.require(&target_key)?;
    let mut steps = Vec::new();
    let mut provided = BTreeSet::new();
    for src in &binding.sources {
        let key = FormatKey::new(&src.concept, src.format.as_deref().unwrap_or_default());
        provided.extend(formats.require(&key)?.part_concepts().map(str::to_string));
        steps.push(Step::Parse {
            source: src.tag.clone(),
            format: key,
        });
    }
    if let Some(part) = assembled.part_concepts().find(|p| !provided.contains(*p)) {
        return Err(FormatError::MissingPart {
            key: target_key,
            part: part.to_string(),
        });
    }
    steps.push(Step::Assemble { format: target_key });
    Ok(steps)
}

/// Binds the target operation's inputs against upstream outputs and derives
/// the format, unit and lookup steps for each bound tag.
pub fn generate_transformation_spec(
    id: impl Into<String>,
    operation: OperationRef,
    target_inputs: &[TagSpec],
    upstream: &[TagSpec],
    o: &Ontology,
    db: &MediationDb,
    cfg: &MatchConfig,
) -> Result<TransformationSpec, DataReconError> {
    let outcome = bind_concepts(target_inputs, upstream, o, db, cfg)?;
    let mut decompositions = BTreeMap::new();
    let mut conversions = BTreeMap::new();
    let mut tables = BTreeMap::new();
    let mut inputs = Vec::new();

    for b in &outcome.bindings {
        let mut steps = derive_format_steps(b, &db.formats)?;
        for s in &steps {
            if let Step::Parse { format, .. } | Step::Assemble { format } = s {
                let d = db.formats.require(format)?.decomposition();
                decompositions.insert(format.clone(), d.clone());
            }
        }
        if let ([src], Some(to)) = (&b.sources[..], &b.target.unit) {
            if let Some(from) = &src.unit {
                if let Some(c) = db.units.derive_unit_step(from, to)? {
                    steps.push(Step::Convert {
                        from: c.from.clone(),
                        to: c.to.clone(),
                    });
                    conversions.insert((c.from.clone(), c.to.clone()), c);
                }
            }
        }
        if let Some(table) = &b.target.lookup {
            tables.insert(table.clone(), db.tables.get(table)?.clone());
            steps.push(Step::Lookup {
                table: table.clone(),
            });
        }
        inputs.push(TagTransform {
            tag: b.target.tag.clone(),
            binding: b.kind,
            sources: b.sources.iter().map(|s| s.tag.clone()).collect(),
            steps,
        });
    }

    let spec = TransformationSpec {
        id: id.into(),
        operation,
        inputs,
        unbound: outcome.unbound,
        decompositions: decompositions.into_values().collect(),
        conversions: conversions.into_values().collect(),
        tables: tables.into_values().collect(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Runs a spec over a message. The output holds exactly the spec's target
/// tags. Unbound targets are taken verbatim from the message when present.
pub fn apply_transformation(
    spec: &TransformationSpec,
    msg: &Message,
) -> Result<Message, DataReconError> {
    let formats: BTreeMap<&FormatKey, CompiledDecomposition> = spec
        .decompositions
        .iter()
        .map(|d| Ok((&d.composite, CompiledDecomposition::new(d.clone())?)))
        .collect::<Result<_, FormatError>>()?;
    let fetch = |tag: &str| {
        msg.get(tag)
            .ok_or_else(|| DataReconError::MissingTag(tag.to_string()))
    };

    let mut out = Message::new();
    for t in &spec.inputs {
        let mut register: Option<String> = None;
        let mut parts: BTreeMap<String, String> = BTreeMap::new();
        for step in &t.steps {
            match step {
                Step::Copy { source } => register = Some(fetch(source)?.clone()),
                Step::Parse { source, format } => {
                    let d = formats
                        .get(format)
                        .ok_or_else(|| FormatError::UnknownFormat(format.clone()))?;
                    parts.extend(d.parse(fetch(source)?)?);
                }
                Step::Assemble { format } => {
                    let d = formats
                        .get(format)
                        .ok_or_else(|| FormatError::UnknownFormat(format.clone()))?;
                    register = Some(d.assemble(&parts)?);
                }
                Step::Convert { from, to } => {
                    let c = spec
                        .conversions
                        .iter()
                        .find(|c| c.from == *from && c.to == *to)
                        .ok_or_else(|| {
                            DataReconError::InvalidSpec(format!(
                                "missing conversion {from} -> {to}"
                            ))
                        })?;
                    let current = loaded(&register, &t.tag)?;
                    let x = parse_decimal(current).ok_or_else(|| DataReconError::NotANumber {
                        tag: t.tag.clone(),
                        value: current.to_string(),
                    })?;
                    let y = c.compile()?.evaluate(x)?;
                    register = Some(round_output(y).to_string());
                }
                Step::Lookup { table } => {
                    let tbl = spec.tables.iter().find(|x| x.id == *table).ok_or_else(|| {
                        DataReconError::InvalidSpec(format!("missing lookup table `{table}`"))
                    })?;
                    let current = loaded(&register, &t.tag)?;
                    let replaced =
                        tbl.replace(current)
                            .ok_or_else(|| DataReconError::LookupMiss {
                                table: table.clone(),
                                value: current.to_string(),
                            })?;
                    register = Some(replaced.to_string());
                }
            }
        }
        out.insert(t.tag.clone(), loaded(&register, &t.tag)?.to_string());
    }
    for u in &spec.unbound {
        let v = msg
            .get(&u.tag)
            .ok_or_else(|| DataReconError::Unbound(u.tag.clone()))?;
        out.insert(u.tag.clone(), v.clone());
    }
    Ok(out)
}

fn loaded<'a>(register: &'a Option<String>, tag: &str) -> Result<&'a str, DataReconError> {
    register
        .as_deref()
        .ok_or_else(|| DataReconError::InvalidSpec(format!("tag `{tag}`: no value loaded")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datarecon::tables::TableDb;

    fn onto() -> Ontology {
        Ontology::from_json(
            r#"{"concepts":["Temporal","Date","Time","Datetime","Temperature","CelsiusTemp",
                            "FahrenheitTemp","Country"],
                "subclass_of":[["Date","Temporal"],["Time","Temporal"],["Datetime","Temporal"],
                               ["CelsiusTemp","Temperature"],["FahrenheitTemp","Temperature"]]}"#,
        )
        .unwrap()
    }

    fn sensor_upstream() -> Vec<TagSpec> {
        vec![
            TagSpec::new("DateUS", "Date").with_format("DateUS"),
            TagSpec::new("Time", "Time").with_format("Time24"),
            TagSpec::new("SensorTempC", "CelsiusTemp").with_unit("Celsius"),
        ]
    }

    fn recording_inputs() -> Vec<TagSpec> {
        vec![
            TagSpec::new("Datetime", "Datetime").with_format("SQLDatetime"),
            TagSpec::new("Value", "FahrenheitTemp").with_unit("Fahrenheit"),
        ]
    }

    fn msg(pairs: &[(&str, &str)]) -> Message {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn generate(inputs: &[TagSpec], upstream: &[TagSpec], db: &MediationDb) -> TransformationSpec {
        generate_transformation_spec(
            "t",
            OperationRef::new("svc", "op"),
            inputs,
            upstream,
            &onto(),
            db,
            &MatchConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn sensor_scenario() {
        let spec = generate(
            &recording_inputs(),
            &sensor_upstream(),
            &MediationDb::defaults(),
        );
        assert!(spec.is_complete());
        let dt = &spec.inputs[0];
        assert_eq!(dt.binding, BindingKind::Composite);
        let kinds: Vec<&str> = dt
            .steps
            .iter()
            .map(|s| match s {
                Step::Parse { .. } => "parse",
                Step::Assemble { .. } => "assemble",
                _ => "other",
            })
            .collect();
        assert_eq!(kinds, ["parse", "parse", "assemble"]);
        assert_eq!(
            spec.inputs[1].steps,
            vec![
                Step::Copy {
                    source: "SensorTempC".into()
                },
                Step::Convert {
                    from: "Celsius".into(),
                    to: "Fahrenheit".into()
                }
            ]
        );

        let out = apply_transformation(
            &spec,
            &msg(&[
                ("DateUS", "12-25-2010"),
                ("Time", "14:30:00"),
                ("SensorTempC", "100"),
            ]),
        )
        .unwrap();
        assert_eq!(
            out,
            msg(&[("Datetime", "2010-12-25 14:30:00"), ("Value", "212")])
        );

        // survives a JSON round-trip as a self-contained document
        let again = TransformationSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn parse_error_names_pattern() {
        let spec = generate(
            &recording_inputs(),
            &sensor_upstream(),
            &MediationDb::defaults(),
        );
        let err = apply_transformation(
            &spec,
            &msg(&[
                ("DateUS", "25/12/2010"),
                ("Time", "14:30:00"),
                ("SensorTempC", "100"),
            ]),
        )
        .unwrap_err();
        assert!(
            matches!(err, DataReconError::Format(FormatError::Mismatch { .. })),
            "{err:?}"
        );
        assert!(err.to_string().contains("[0-9]"));
    }

    #[test]
    fn identical_inputs_copy_only() {
        let tags = sensor_upstream();
        let spec = generate(&tags, &tags, &MediationDb::defaults());
        assert!(spec.is_identity());
        let m = msg(&[
            ("DateUS", "01-02-2003"),
            ("Time", "00:00:01"),
            ("SensorTempC", "7"),
        ]);
        assert_eq!(apply_transformation(&spec, &m).unwrap(), m);
    }

    #[test]
    fn missing_temperature_is_unbound() {
        let spec = generate(
            &recording_inputs(),
            &sensor_upstream()[..2],
            &MediationDb::defaults(),
        );
        assert_eq!(spec.unbound.len(), 1);
        assert_eq!(spec.unbound[0].tag, "Value");
        let m = msg(&[("DateUS", "12-25-2010"), ("Time", "14:30:00")]);
        assert_eq!(
            apply_transformation(&spec, &m).unwrap_err(),
            DataReconError::Unbound("Value".into())
        );
    }

    #[test]
    fn missing_source_tag() {
        let spec = generate(
            &recording_inputs(),
            &sensor_upstream(),
            &MediationDb::defaults(),
        );
        let err = apply_transformation(
            &spec,
            &msg(&[("DateUS", "12-25-2010"), ("Time", "14:30:00")]),
        )
        .unwrap_err();
        assert_eq!(err, DataReconError::MissingTag("SensorTempC".into()));
    }

    #[test]
    fn lookup_replacement() {
        let mut db = MediationDb::defaults();
        db.tables =
            TableDb::from_json(r#"{"tables":[{"id":"country","entries":{"FR":"France"}}]}"#)
                .unwrap();
        let mut target = TagSpec::new("CountryName", "Country");
        target.lookup = Some("country".into());
        let spec = generate(&[target], &[TagSpec::new("Code", "Country")], &db);
        assert_eq!(
            apply_transformation(&spec, &msg(&[("Code", "FR")])).unwrap(),
            msg(&[("CountryName", "France")])
        );
        assert_eq!(
            apply_transformation(&spec, &msg(&[("Code", "DE")])).unwrap_err(),
            DataReconError::LookupMiss {
                table: "country".into(),
                value: "DE".into()
            }
        );
    }

    #[test]
    fn unknown_target_format() {
        let target = TagSpec::new("Datetime", "Datetime").with_format("ISO");
        let err = generate_transformation_spec(
            "t",
            OperationRef::new("s", "o"),
            &[target],
            &[TagSpec::new("When", "Datetime").with_format("SQLDatetime")],
            &onto(),
            &MediationDb::defaults(),
            &MatchConfig::default(),
        )
        .unwrap_err();
        assert!(
            matches!(err, DataReconError::Format(FormatError::UnknownFormat(_))),
            "{err:?}"
        );
    }

    #[test]
    fn validation_rejects_dangling_references() {
        let mut spec = generate(
            &recording_inputs(),
            &sensor_upstream(),
            &MediationDb::defaults(),
        );
        spec.conversions.clear();
        assert!(matches!(
            spec.validate(),
            Err(DataReconError::InvalidSpec(_))
        ));

        let mut spec = generate(
            &recording_inputs(),
            &sensor_upstream(),
            &MediationDb::defaults(),
        );
        spec.decompositions.pop();
        assert!(spec.validate().is_err());

        let mut spec = generate(
            &recording_inputs(),
            &sensor_upstream(),
            &MediationDb::defaults(),
        );
        let dup = spec.inputs[0].clone();
        spec.inputs.push(dup);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn non_numeric_conversion_input() {
        let spec = generate(
            &recording_inputs(),
            &sensor_upstream(),
            &MediationDb::defaults(),
        );
        let err = apply_transformation(
            &spec,
            &msg(&[
                ("DateUS", "12-25-2010"),
                ("Time", "14:30:00"),
                ("SensorTempC", "hot"),
            ]),
        )
        .unwrap_err();
        assert!(matches!(err, DataReconError::NotANumber { .. }));
    }
}
