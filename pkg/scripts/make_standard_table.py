"""Regenerate the bundled synthetic standard life table (Siler hazard, 0..100+)."""

from pathlib import Path

from bayespop.trajectory import synthetic_standard, write_standard_life_table

if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "bayespop" / "data" / "standard_life_table.csv"
    table = synthetic_standard()
    write_standard_life_table(table, out)
    print(f"wrote {out}: female e0 {table.e0('female'):.2f}, male e0 {table.e0('male'):.2f}")
