/** @file Spawns the rpcikit command line and maps its exit codes to errors.

The tool reports bad inputs on exit code 1 with a final stderr line of the
form `error: <text>` and I/O failures on exit code 2 with `i/o error: <text>`.
Those lines become InputError / IoError here, carrying `<text>` verbatim.
*/

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { InputError, IoError } from "./errors.js";

/** Environment variable naming the CLI to spawn, e.g. "python3 -m rpcikit". */
export const CLI_ENV = "RPCIKIT_CLI";

const DEFAULT_CLI = "rpcikit";
const FALLBACK_CLI = ["python3", "-m", "rpcikit"];
const MAX_BUFFER = 256 * 1024 * 1024;

export interface CliResult {
    stdout: string;
    stderr: string;
}

function cliCommand(): string[] {
    const custom = process.env[CLI_ENV];
    if (custom && custom.trim() !== "") {
        return custom.trim().split(/\s+/);
    }
    return [DEFAULT_CLI];
}

function errorText(stderr: string, prefix: string): string | undefined {
    const lines = stderr.split(/\r?\n/);
    for (let i = lines.length - 1; i >= 0; i--) {
        if (lines[i].startsWith(prefix)) {
            return lines[i].slice(prefix.length);
        }
    }
    return undefined;
}

/**
 * Run one CLI invocation and return its captured output. Exit code 1 raises
 * InputError and exit code 2 raises IoError, each carrying the tool's error
 * text; any other failure raises a plain Error.
 */
export function runCli(args: string[]): CliResult {
    let argv = [...cliCommand(), "-q", ...args];
    let proc = spawnSync(argv[0], argv.slice(1), { encoding: "utf-8", maxBuffer: MAX_BUFFER });
    if (proc.error && (proc.error as NodeJS.ErrnoException).code === "ENOENT"
            && argv[0] === DEFAULT_CLI) {
        argv = [...FALLBACK_CLI, "-q", ...args];
        proc = spawnSync(argv[0], argv.slice(1), { encoding: "utf-8", maxBuffer: MAX_BUFFER });
    }
    if (proc.error) {
        throw new Error(`cannot run ${argv[0]}: ${proc.error.message}`);
    }
    if (proc.status === 1) {
        throw new InputError(errorText(proc.stderr, "error: ") ?? proc.stderr.trim());
    }
    if (proc.status === 2) {
        throw new IoError(errorText(proc.stderr, "i/o error: ") ?? proc.stderr.trim());
    }
    if (proc.status !== 0) {
        const why = proc.signal ? `signal ${proc.signal}` : `exit code ${proc.status}`;
        throw new Error(`${argv.join(" ")} failed with ${why}: ${proc.stderr.trim()}`);
    }
    return { stdout: proc.stdout, stderr: proc.stderr };
}

/**
 * Create a private scratch directory, hand it to `body`, and remove it
 * afterwards regardless of outcome.
 */
export function withWorkspace<T>(body: (dir: string) => T): T {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), "rpcikit-"));
    try {
        return body(dir);
    } finally {
        fs.rmSync(dir, { recursive: true, force: true });
    }
}
