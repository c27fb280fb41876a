use floquet_core::Error;

pub const VIOLATIONS: u8 = 3;

/// (error kind, exit code), in the order printed by --help.
pub const CODES: &[(&str, u8)] = &[
    ("SchemaError", 10),
    ("UnitError", 11),
    ("TopologyError", 12),
    ("CapacityError", 13),
    ("DimensionMismatch", 14),
    ("StepSizeUnderflow", 15),
    ("NonFinite", 16),
    ("NotConverged", 17),
    ("DefectiveGenerator", 18),
    ("DefectiveFloquetMatrix", 19),
    ("DefectiveInput", 20),
    ("SingularSystem", 21),
    ("NotSteady", 22),
    ("BranchCut", 23),
    ("TruncationNotConverged", 24),
    ("NonUniformDephasing", 25),
    ("EigenError", 26),
    ("InvalidArgument", 27),
    ("IoError", 28),
];

pub fn code_for(e: &Error) -> u8 {
    CODES.iter().find(|(k, _)| *k == e.kind()).map_or(1, |&(_, c)| c)
}

pub fn help_text() -> String {
    let mut s = String::from("Exit codes:\n  0   success\n  1   unexpected failure\n  2   usage error\n  3   model or run validation failed\n");
    for (kind, code) in CODES {
        s.push_str(&format!("  {code:<3} {kind}\n"));
    }
    s.push_str("\nOn failure a JSON object {\"error\", \"message\", \"exit_code\"} is written to stderr.");
    s
}
