"""Independent oracle for the canonical config layout.

Executes a config file with Python itself and re-emits `model` using the
canonical layout rules. Used once to freeze the *.canonical.py fixtures.
"""
import sys

IND = "    "


def esc(s):
    out = []
    for ch in s:
        if ch == "\\":
            out.append("\\\\")
        elif ch == "'":
            out.append("\\'")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        else:
            out.append(ch)
    return "'" + "".join(out) + "'"


def render(v, depth):
    if isinstance(v, bool):
        return "True" if v else "False"
    if v is None:
        return "None"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return esc(v)
    if isinstance(v, dict):
        items = list(v.items())
        if not items:
            return "dict()"
        if len(items) == 1:
            k, x = items[0]
            return "dict(%s=%s)" % (k, render(x, depth))
        lines = [IND * (depth + 1) + "%s=%s" % (k, render(x, depth + 1)) for k, x in items]
        return "dict(\n" + ",\n".join(lines) + ")"
    if isinstance(v, (list, tuple)):
        o, c = ("[", "]") if isinstance(v, list) else ("(", ")")
        if not v:
            return o + c
        body = "".join(IND * (depth + 1) + render(x, depth + 1) + ",\n" for x in v)
        return o + "\n" + body + IND * depth + c
    raise TypeError(type(v))


def main(path):
    ns = {}
    exec(open(path).read(), {"dict": dict}, ns)
    sys.stdout.write("model = " + render(ns["model"], 0) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
