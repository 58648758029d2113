"""Regenerate the bundled 24-group CNA staff-time table.

Branch layout mirrors the classification precedence (extensive care over
rehabilitation over physical function); totals span 30-200 minutes/day and are
all distinct so cluster ordering is strict. Direct share is 78% on the
function/rehab branches and 72% on the extensive branch, where more of the
work is indirect support.
"""

from pathlib import Path

from nhplan.cohort import REHAB_LEVELS
from nhplan.need import ADL_BANDS, RawGroup, RawGroupTable, write_raw_group_table

FUNCTION_TOTALS = (35, 54, 74)
REHAB_TOTALS = {
    "low": (60, 85, 110),
    "medium": (76, 101, 126),
    "high": (91, 116, 141),
    "very_high": (106, 131, 156),
    "ultra_high": (122, 147, 172),
}
EXTENSIVE_TOTALS = {"level1": (118, 143, 163), "level2": (152, 177, 200)}


def build() -> RawGroupTable:
    groups = []

    def add(gid, total, band, rehab, ext, direct_share):
        direct = round(direct_share * total, 1)
        indirect = round(total - direct, 1)
        lo, hi = ADL_BANDS[band]
        groups.append(RawGroup(group_id=gid, direct_mean=direct,
                               indirect_mean=indirect, adl_lo=lo, adl_hi=hi,
                               rehab_level=rehab, extensive_level=ext))

    for band, total in enumerate(FUNCTION_TOTALS):
        add(f"PF{band + 1}", total, band, "none", "none", 0.78)
    for level in REHAB_LEVELS[1:]:
        for band, total in enumerate(REHAB_TOTALS[level]):
            add(f"R{REHAB_LEVELS.index(level)}{band + 1}", total, band,
                level, "none", 0.78)
    for level, totals in EXTENSIVE_TOTALS.items():
        for band, total in enumerate(totals):
            add(f"E{level[-1]}{band + 1}", total, band, "none", level, 0.72)
    return RawGroupTable(groups=tuple(groups))


if __name__ == "__main__":
    table = build()
    out = Path(__file__).resolve().parent.parent / "src" / "nhplan" / "data" / "raw_groups.csv"
    write_raw_group_table(table, out)
    print(f"wrote {len(table.groups)} raw groups to {out}")
