import ast
import io
import json
import os
import sys


INFRA_EXIT = 97


class OutputLimitExceeded(BaseException):
    pass


class CappedWriter(io.TextIOBase):
    def __init__(self, cap):
        self.cap = cap
        self.used = 0

    def writable(self):
        return True

    def write(self, s):
        self.used += len(s.encode("utf-8", "backslashreplace"))
        if self.used > self.cap:
            raise OutputLimitExceeded("captured output exceeded %d bytes" % self.cap)
        return len(s)


def one_line(text, cap):
    text = text.replace("\r", "\\r").replace("\n", "\\n")
    if len(text) > cap:
        text = text[:cap] + " ...[truncated]"
    return text


def same(a, b, tol):
    if tol is not None and isinstance(a, (int, float)) and isinstance(b, (int, float)) \
            and not isinstance(a, bool) and not isinstance(b, bool):
        return abs(a - b) <= tol
    if tol is not None and type(a) is type(b) and isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(same(x, y, tol) for x, y in zip(a, b))
    if tol is not None and isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(same(a[k], b[k], tol) for k in a)
    return a == b


def install_guard(scratch):
    blocked = {
        "os.system", "os.exec", "os.posix_spawn", "os.spawn", "os.fork", "os.forkpty",
        "subprocess.Popen", "pty.spawn", "os.kill", "os.killpg", "signal.pthread_kill",
        "ctypes.dlopen", "ctypes.dlsym", "ctypes.addressof", "ctypes.cdata",
        "resource.setrlimit", "resource.prlimit", "os.chroot", "os.setuid",
    }
    path_events = {
        "os.remove", "os.rmdir", "os.rename", "os.replace", "os.mkdir", "os.chmod",
        "os.chown", "os.link", "os.symlink", "os.truncate", "os.utime", "shutil.rmtree",
        "shutil.copyfile", "shutil.move", "os.chflags", "os.removexattr", "os.setxattr",
    }
    write_flags = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_APPEND | os.O_TRUNC
    realpath = os.path.realpath
    join = os.path.join
    getcwd = os.getcwd
    fspath = os.fspath
    prefix = scratch.rstrip("/") + "/"
    busy = [False]

    def inside(path):
        if isinstance(path, int):
            return True
        p = fspath(path)
        if isinstance(p, bytes):
            p = p.decode("utf-8", "surrogateescape")
        full = realpath(join(getcwd(), p))
        return full == scratch or full.startswith(prefix)

    def hook(event, args):
        if busy[0]:
            return
        busy[0] = True
        try:
            if event in blocked or event.startswith("socket."):
                raise PermissionError("sandbox: %s is not allowed" % event)
            if event == "open":
                path, mode, flags = (tuple(args) + (None, None, None))[:3]
                writing = (isinstance(mode, str) and any(c in mode for c in "wax+")) \
                    or (isinstance(flags, int) and flags & write_flags)
                if writing and path is not None and not inside(path):
                    raise PermissionError("sandbox: write outside scratch: %r" % (path,))
            elif event in path_events:
                for a in args:
                    if isinstance(a, (str, bytes, os.PathLike)) and not inside(a):
                        raise PermissionError("sandbox: %s outside scratch: %r" % (event, a))
        finally:
            busy[0] = False

    sys.addaudithook(hook)


def main():
    try:
        with open(sys.argv[1], encoding="utf-8") as fh:
            job = json.load(fh)
        frames = os.fdopen(os.dup(1), "w", encoding="utf-8", errors="backslashreplace")
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, 1)
        scratch = os.path.realpath(os.getcwd())
    except BaseException as exc:
        sys.stderr.write("runner setup failed: %r\n" % (exc,))
        sys.exit(INFRA_EXIT)

    cap = int(job.get("output_cap", 65536))
    msg_cap = int(job.get("message_cap", 500))
    tol = job.get("tolerance")
    mode = job["mode"]

    def emit(line):
        frames.write(line + "\n")
        frames.flush()

    def error(exc):
        emit("MARCO_ERROR %s: %s" % (type(exc).__name__, one_line(str(exc), msg_cap)))

    def value_line(v):
        text = repr(v)
        if len(text.encode("utf-8", "backslashreplace")) > cap:
            raise OutputLimitExceeded("result repr exceeded %d bytes" % cap)
        return "MARCO_RESULT " + one_line(text, cap)

    def fresh():
        return {"__name__": "__marco__", "__builtins__": __builtins__}

    sys.stdout = CappedWriter(cap)
    install_guard(scratch)
    sys.setrecursionlimit(3000)

    if mode == "compare":
        try:
            a = eval(compile(job["a"], "<a>", "eval"), fresh())
            b = eval(compile(job["b"], "<b>", "eval"), fresh())
        except BaseException as exc:
            error(exc)
            return
        try:
            emit("MARCO_EQUAL " + ("true" if same(a, b, tol) else "false"))
        except BaseException as exc:
            error(exc)
        return

    expected = None
    if mode == "check":
        try:
            expected = eval(compile(job["expected"], "<expected>", "eval"), fresh())
        except BaseException as exc:
            emit("MARCO_ERROR MarcoExpectedError: %s: %s"
                 % (type(exc).__name__, one_line(str(exc), msg_cap)))
            return

    ns = fresh()
    try:
        code = job["code"]
        exec(compile(code, "<candidate>", "exec"), ns)
        entry = job.get("entry")
        if entry and entry not in ns:
            defs = [n.name for n in ast.parse(code).body
                    if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))]
            if len(defs) == 1:
                ns[entry] = ns[defs[0]]
        value = eval(compile(job["call"], "<call>", "eval"), ns)
        line = value_line(value)
        verdict = None
        if mode == "check":
            verdict = same(value, expected, tol)
    except BaseException as exc:
        error(exc)
        return
    emit(line)
    if verdict is not None:
        emit("MARCO_EQUAL " + ("true" if verdict else "false"))


main()
