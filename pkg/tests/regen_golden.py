"""Rewrite tests/golden/ from the current code.  Review the diff before committing."""

from golden_cases import GOLDEN, all_cases

if __name__ == "__main__":
    for name, text in all_cases().items():
        path = GOLDEN / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
        print("wrote", path)
