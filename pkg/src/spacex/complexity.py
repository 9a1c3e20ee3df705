"""Heuristic per-method cyclomatic complexity.

Methods are segmented by brace matching for C-like languages and by
indentation for Python.  Each method scores 1 plus the number of branch
tokens in its body.  No parsing beyond that; unsupported inputs yield [].
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import PurePosixPath

C_LIKE_EXTENSIONS = {
    ".c", ".h", ".cc", ".cpp", ".cxx", ".hpp", ".hh", ".hxx", ".java", ".js",
    ".jsx", ".mjs", ".ts", ".tsx", ".go", ".cs", ".rs", ".kt", ".kts", ".swift",
    ".php", ".scala", ".m", ".mm", ".dart", ".groovy",
}
PYTHON_EXTENSIONS = {".py", ".pyw", ".pyi"}

_C_BRANCHES = re.compile(
    r"\bif\b|\bfor\b|\bforeach\b|\bwhile\b|\bcase\b|\bcatch\b|&&|\|\|"
    r"|(?<![?])\?(?![.?:>,)\]])"
)
_PY_BRANCHES = re.compile(r"\bif\b|\belif\b|\bfor\b|\bwhile\b|\bexcept\b|\bcase\b|\band\b|\bor\b")

_C_NOISE = re.compile(
    r"//[^\n]*|/\*.*?\*/|\"(?:\\.|[^\\\"\n])*\"|`(?:\\.|[^\\`])*`|'(?:\\.[^'\n]{0,8}|[^\\'\n])'",
    re.DOTALL,
)
_PY_NOISE = re.compile(
    r"#[^\n]*|\"\"\"(?:\\.|[^\\])*?\"\"\"|'''(?:\\.|[^\\])*?'''"
    r"|\"(?:\\.|[^\\\"\n])*\"|'(?:\\.|[^\\'\n])*'",
    re.DOTALL,
)

_CONTROL_WORDS = {
    "if", "for", "foreach", "while", "switch", "catch", "else", "do", "try",
    "synchronized", "return", "using", "lock", "with", "when", "match", "loop",
    "sizeof", "new", "unsafe", "defer",
}
_FUNC_KEYWORD = re.compile(r"\b(?:func|fn|fun|function)\b")
_CALL_HEAD = re.compile(r"([A-Za-z_~][\w:~]*)\s*\(")
_SIG_TAIL = re.compile(
    r"\)\s*(?:const|noexcept|override|final|mutable|throws\s+[\w.,\s]+)*\s*$"
)
_PY_DEF = re.compile(r"^([ \t]*)(?:async[ \t]+)?def[ \t]+(\w+)")


@dataclass(frozen=True)
class MethodSpan:
    name: str
    start_line: int  # 1-based, inclusive
    end_line: int
    complexity: int


def language_for(path: str) -> str | None:
    suffix = PurePosixPath(path).suffix.lower()
    if suffix in PYTHON_EXTENSIONS:
        return "python"
    if suffix in C_LIKE_EXTENSIONS:
        return "c"
    return None


def _blank(match: re.Match) -> str:
    # keep newlines so line numbers survive stripping
    return re.sub(r"[^\n]", " ", match.group(0))


def _c_methods(text: str) -> list[MethodSpan]:
    clean = _C_NOISE.sub(_blank, text)
    line_starts = [0] + [i + 1 for i, ch in enumerate(clean) if ch == "\n"]

    def line_of(offset: int) -> int:
        lo, hi = 0, len(line_starts)
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if line_starts[mid] <= offset:
                lo = mid
            else:
                hi = mid
        return lo + 1

    spans = []
    head_start = 0
    i = 0
    n = len(clean)
    while i < n:
        ch = clean[i]
        if ch in ";}":
            head_start = i + 1
        elif ch == "{":
            raw_head = clean[head_start:i]
            head = raw_head.strip()
            if _is_method_head(head):
                end = _match_brace(clean, i)
                body = clean[i + 1:end]
                name_match = _CALL_HEAD.search(head)
                name = name_match.group(1) if name_match else "<anonymous>"
                spans.append(MethodSpan(
                    name=name,
                    start_line=line_of(head_start + len(raw_head) - len(raw_head.lstrip())),
                    end_line=line_of(end if end < n else n - 1),
                    complexity=1 + len(_C_BRANCHES.findall(body)),
                ))
                i = end
                head_start = end + 1
            else:
                head_start = i + 1
        i += 1
    return spans


def _is_method_head(head: str) -> bool:
    if not head:
        return False
    if head.endswith("=>"):
        return True
    if _FUNC_KEYWORD.search(head):
        return "(" in head
    call = _CALL_HEAD.search(head)
    if call is None or call.group(1).split("::")[-1] in _CONTROL_WORDS:
        return False
    if re.search(r"\b(?:class|struct|namespace|enum|interface|union)\b", head):
        return False
    return bool(_SIG_TAIL.search(head))


def _match_brace(text: str, open_at: int) -> int:
    depth = 0
    for j in range(open_at, len(text)):
        if text[j] == "{":
            depth += 1
        elif text[j] == "}":
            depth -= 1
            if depth == 0:
                return j
    return len(text)


def _python_methods(text: str) -> list[MethodSpan]:
    lines = _PY_NOISE.sub(_blank, text).split("\n")
    spans = []
    i = 0
    while i < len(lines):
        match = _PY_DEF.match(lines[i])
        if not match:
            i += 1
            continue
        indent = len(match.group(1).expandtabs())
        end = i
        j = i + 1
        # body ends at the first non-blank line indented <= the def
        while j < len(lines):
            stripped = lines[j].strip()
            if stripped and len(lines[j]) - len(lines[j].lstrip()) <= indent and not _continues_signature(lines, i, j):
                break
            if stripped:
                end = j
            j += 1
        body = "\n".join(lines[i:end + 1])
        body = body[body.find("def") + 3:]
        spans.append(MethodSpan(
            name=match.group(2),
            start_line=i + 1,
            end_line=end + 1,
            complexity=1 + len(_PY_BRANCHES.findall(body)),
        ))
        i = end + 1
    return spans


def _continues_signature(lines: list[str], def_line: int, j: int) -> bool:
    # a def whose parameter list spans lines: keep going until parens balance
    text = "\n".join(lines[def_line:j])
    return text.count("(") > text.count(")")


def method_spans(source_text: str, language_hint: str | None = None) -> list[MethodSpan]:
    """Segment ``source_text`` into methods with their complexity."""
    if "\x00" in source_text:
        return []
    language = (language_hint or "").lower()
    if language in ("python", "py"):
        return _python_methods(source_text)
    if language in ("c", "c-like", "cpp", "java", "javascript", "js", "go", "rust", "csharp"):
        return _c_methods(source_text)
    return []


def estimate_complexity(source_text: str, language_hint: str | None = None) -> list[int]:
    """Return one complexity value (>= 1) per detected method."""
    return [span.complexity for span in method_spans(source_text, language_hint)]
