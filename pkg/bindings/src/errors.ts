/** @file Error types thrown by the bindings, mirroring the CLI's exit codes. */

/**
 * Raised for anything wrong with the inputs: bad label values, mismatched
 * grids, invalid options. Corresponds to CLI exit code 1; the message carries
 * the tool's own error text.
 */
export class InputError extends Error {
    constructor(message: string) {
        super(message);
        this.name = "InputError";
    }
}

/**
 * Raised when a file cannot be read or written. Corresponds to CLI exit
 * code 2.
 */
export class IoError extends Error {
    constructor(message: string) {
        super(message);
        this.name = "IoError";
    }
}
