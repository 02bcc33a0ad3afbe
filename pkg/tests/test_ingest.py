import csv
import io

import pytest

from conftest import synthetic_rows, write_rows
from otcnet.ingest import (
    COLUMNS,
    AliasConflictError,
    AliasTable,
    DuplicateRecordError,
    IngestError,
    MergeSafetyError,
    QuarterRecord,
    RowError,
    build_panel,
    load_panel,
    merge_identities,
    normalize_name,
    read_rows,
    validate_record,
    write_panel_csv,
)
from otcnet.quarters import canonical_quarter, quarter_range


def _row(quarter, name, rank, total, state="NY", cce="", pfe="", tce=""):
    etd = total // 10
    otc = total - etd
    return [quarter, name, rank, state, total * 2, total, etd, 0, otc, 0, 0, 0, 0,
            cce, pfe, tce, ""]


def _rows(lines):
    text = io.StringIO()
    w = csv.writer(text, lineterminator="\n")
    w.writerow(COLUMNS)
    w.writerows(lines)
    text.seek(0)
    return read_rows(text)[0]


# ---------------------------------------------------------------- names

@pytest.mark.parametrize("raw, expected", [
    ("KEYBANK NATIONAL ASSN", "KEYBANK"),
    ("KEYBANK NA", "KEYBANK"),
    ("KEYBANK", "KEYBANK"),
    ("MELLONG BANK", "MELLON BANK"),
    ("Mellong Bank, N.A.", "MELLON BANK"),
    ("  bankers   trust co ", "DEUTSCHE BANK TR CO AMERICAS"),
    ("BANK OF AMERICA NT&SA", "BANK OF AMERICA"),
    ("UNION BANK OF CALIFORNIA NA", "UNION BANK"),
    ("STANDARD FEDERAL BANK NA", "LASALLE BANK MIDWEST"),
    ("SOME OTHER BANK", "SOME OTHER BANK"),
])
def test_normalize_name(aliases, raw, expected):
    assert normalize_name(raw, aliases) == expected


def test_normalize_is_idempotent_on_bundled_table(aliases):
    for pattern, canonical in aliases.rules:
        once = normalize_name(pattern, aliases)
        assert normalize_name(once, aliases) == once
        assert normalize_name(canonical, aliases) == canonical


def test_normalize_rejects_empty(aliases):
    with pytest.raises(IngestError):
        normalize_name("   ", aliases)


def test_suffix_only_name_is_kept(aliases):
    assert normalize_name("NA", aliases) == "NA"


def test_alias_conflicts_detected():
    with pytest.raises(AliasConflictError):
        AliasTable((("FOO BANK", "FOO"), ("FOO BANK NA", "BAR")), ("NA",))
    with pytest.raises(AliasConflictError):  # chain breaks idempotence
        AliasTable((("A BANK", "B BANK"), ("B BANK", "C BANK")))
    with pytest.raises(AliasConflictError):  # canonical not in normal form
        AliasTable((("A BANK", "C BANK NA"),), ("NA",))


def test_alias_tsv_parsing():
    table = AliasTable.from_tsv(io.StringIO("# c\nOLD\tNEW\n@suffix\tNA\n"))
    assert table.normalize("old na") == "NEW"
    with pytest.raises(IngestError):
        AliasTable.from_tsv(io.StringIO("ONLY ONE COLUMN\n"))


# ---------------------------------------------------------------- merges

def test_state_variants_collapse(aliases):
    rows = _rows([
        _row("2001-Q1", "ACME BANK", 1, 100, state="CA"),
        _row("2001-Q2", "ACME BANK", 1, 100, state="NY"),
    ])
    report = merge_identities(rows, aliases)
    assert report.registry == {0: "ACME BANK"}
    assert report.violations == []


def test_identical_rows_single_identity(aliases):
    rows = _rows([_row("2001-Q1", "ACME BANK", 1, 100)] * 2)
    report = merge_identities(rows, aliases)
    assert report.registry == {0: "ACME BANK"}
    assert report.violations == []


def test_co_appearing_alias_sources_violate(aliases):
    lines = [
        _row("2001-Q1", "KEYBANK NA", 1, 100),
        _row("2001-Q2", "KEYBANK NA", 1, 100),
        _row("2001-Q2", "KEYBANK NATIONAL ASSN", 2, 90),
        _row("2001-Q2", "OTHER BANK", 3, 50),
    ]
    rows = _rows(lines)
    # independent check: scan quarter memberships of distinct raw names
    seen = {}
    for r in rows:
        seen.setdefault((r.quarter_label, normalize_name(r.name, aliases)), set()).add(r.name)
    clashes = [k for k, v in seen.items() if len(v) > 1]
    assert clashes == [("2001-Q2", "KEYBANK")]

    with pytest.raises(MergeSafetyError) as err:
        merge_identities(rows, aliases)
    (v,) = err.value.violations
    assert v.quarter_label == "2001-Q2" and v.canonical == "KEYBANK"
    assert {r.name for r in v.rows} == {"KEYBANK NA", "KEYBANK NATIONAL ASSN"}
    assert "KEYBANK NA" in str(err.value) and "KEYBANK NATIONAL ASSN" in str(err.value)

    report = merge_identities(rows, aliases, allow_unsafe=True)
    assert len(report.violations) == 1
    with pytest.raises(DuplicateRecordError):
        build_panel(rows, aliases, allow_unsafe_merge=True)


# ---------------------------------------------------------------- reading

def test_schema_mismatch():
    with pytest.raises(IngestError, match="total_derivatives"):
        read_rows(io.StringIO("quarter,name\n2001-Q1,A\n"))


def test_malformed_row_strict_and_tolerant(raw_small):
    with pytest.raises(RowError) as err:
        read_rows(raw_small)
    assert err.value.line == 8

    rows, recovered = read_rows(raw_small, tolerant=True)
    with open(raw_small, newline="") as fh:
        body = list(csv.reader(fh))[1:]
    well_formed = [r for r in body if len(r) == len(COLUMNS)]
    assert len(rows) == len(well_formed) == len(body) - 1
    assert [e.line for e in recovered] == [8]


def test_tolerant_panel_excludes_row_and_logs(raw_small, aliases):
    panel = load_panel(raw_small, aliases, tolerant=True)
    assert "BROKEN BANK" not in panel.names
    assert any(line.startswith("skipped line 8") for line in panel.log)
    assert panel.N == 4 and panel.T == 3


def test_negative_amount_rejected():
    with pytest.raises(RowError, match="negative"):
        _rows([_row("2001-Q1", "A", 1, -5)])


def test_quarter_label_forms():
    assert canonical_quarter("2008Q4") == canonical_quarter("2008/q4") == "2008-Q4"
    with pytest.raises(ValueError):
        canonical_quarter("2008-Q5")


# ---------------------------------------------------------------- panel

def test_single_row_panel(aliases):
    panel = build_panel(_rows([_row("2003-Q2", "ONLY BANK", 1, 10)]), aliases)
    assert (panel.N, panel.T, panel.ranked_records()) == (1, 1, 1)


def test_full_57_quarter_panel(aliases, tmp_path):
    rows = synthetic_rows(n_inst=61, start="1998-Q4", end="2012-Q4", seed=3)
    panel = load_panel(write_rows(tmp_path / "p.csv", rows), aliases)
    assert panel.T == 57
    assert panel.ranked_records() == 1425
    assert sum(len(panel.presence(i)) for i in range(panel.N)) == 1425


def test_panel_invariants(synthetic_panel):
    p = synthetic_panel
    for t in range(p.T):
        r = sorted(x for x in p.ranks[:, t] if x > 0)
        assert r == list(range(1, len(r) + 1)) and len(r) <= 25
        ordered = sorted((x, p.activity[i, t]) for i, x in enumerate(p.ranks[:, t]) if x > 0)
        acts = [a for _, a in ordered]
        assert acts == sorted(acts, reverse=True)
    for i in range(p.N):
        pres = p.presence(i)
        assert all(((i, t) in p.records) == (t in pres) for t in range(1, p.T + 1))
        assert all(p.activity[i, t - 1] == 0 for t in range(1, p.T + 1) if t not in pres)
    assert sum(len(p.presence(i)) for i in range(p.N)) == p.ranked_records()


def test_rank_gap_is_repaired(aliases):
    panel = build_panel(_rows([
        _row("2001-Q1", "B BANK", 1, 100),
        _row("2001-Q1", "A BANK", 3, 100),
        _row("2001-Q1", "C BANK", 4, 300),
    ]), aliases)
    ranks = dict(zip(panel.names, panel.ranks[:, 0]))
    assert ranks == {"C BANK": 1, "A BANK": 2, "B BANK": 3}
    assert any("re-ranked 2001-Q1" in line for line in panel.log)


def test_consistent_reported_ranks_are_kept(aliases):
    panel = build_panel(_rows([
        _row("2001-Q1", "B BANK", 1, 100),
        _row("2001-Q1", "A BANK", 2, 100),
    ]), aliases)
    assert dict(zip(panel.names, panel.ranks[:, 0])) == {"A BANK": 2, "B BANK": 1}
    assert panel.log == ()


def test_duplicate_after_merge_is_an_error(aliases):
    rows = _rows([_row("2001-Q1", "ACME BANK", 1, 100), _row("2001-Q1", "ACME BANK", 2, 90)])
    with pytest.raises(DuplicateRecordError) as err:
        build_panel(rows, aliases)
    assert [r.line for r in err.value.rows] == [2, 3]


def test_more_than_top_n_rows(aliases):
    rows = _rows([_row("2001-Q1", f"B{k}", k + 1, 100 - k) for k in range(26)])
    with pytest.raises(IngestError, match="top-25"):
        build_panel(rows, aliases)


def test_rows_outside_declared_range(aliases):
    rows = _rows([_row("2001-Q1", "A", 1, 10)])
    with pytest.raises(IngestError, match="outside"):
        build_panel(rows, aliases, ("2002-Q1", "2002-Q4"))
    panel = build_panel(rows, aliases, ("2000-Q4", "2001-Q2"))
    assert panel.quarters == quarter_range("2000-Q4", "2001-Q2")
    assert panel.presence(0) == {2}


def test_null_exposures_stay_null(raw_small, aliases):
    panel = load_panel(raw_small, aliases, tolerant=True)
    key = panel.index_of("KEYBANK")
    rec = panel.records[(key, 2)]
    assert rec.cce == 1 and rec.pfe is None and rec.tce is None
    tce = panel.series("tce")
    assert tce[key, 1] != tce[key, 1]  # NaN, not zero
    assert panel.activity[key, 1] == 52


def test_round_trip_is_idempotent(synthetic_panel, aliases, tmp_path):
    path = tmp_path / "normalized.csv"
    write_panel_csv(synthetic_panel, path)
    again = load_panel(path, aliases)
    assert again == synthetic_panel
    write_panel_csv(again, tmp_path / "twice.csv")
    assert (tmp_path / "twice.csv").read_bytes() == path.read_bytes()


def test_round_trip_small(raw_small, aliases, tmp_path):
    first = load_panel(raw_small, aliases, tolerant=True)
    write_panel_csv(first, tmp_path / "n.csv")
    assert load_panel(tmp_path / "n.csv", aliases) == first


# ---------------------------------------------------------------- validation

def _rec(**kw):
    base = dict(institution_id=0, quarter_index=1, activity=100, activity_etd=10,
                activity_otc=90, cce=10, pfe=5, tce=15, rank=1)
    base.update(kw)
    return QuarterRecord(**base)


def test_validate_clean_record():
    assert validate_record(_rec()) == []


def test_validate_tce_identity():
    problems = validate_record(_rec(cce=10, pfe=5, tce=20))
    assert len(problems) == 1 and "TCE" in problems[0]


def test_validate_tolerance_and_sign():
    assert validate_record(_rec(activity_otc=90, activity=100, activity_etd=10)) == []
    assert len(validate_record(_rec(activity=101))) == 1
    assert any("negative" in p for p in validate_record(_rec(cce=-1, tce=4)))


def test_fixture_records_satisfy_identities(synthetic_panel, raw_small, aliases):
    for rec in synthetic_panel.records.values():
        assert validate_record(rec) == []
    small = load_panel(raw_small, aliases, tolerant=True)
    for rec in small.records.values():
        assert validate_record(rec) == []
