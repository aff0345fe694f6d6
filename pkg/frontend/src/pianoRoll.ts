/** Piano-roll geometry and canvas rendering for 64-step token windows.
 *
 * Drawing is split in two: a pure function turns tokens into an ordered
 * list of draw operations, and a thin canvas executor runs them. Tests
 * compare operation lists, so "identical drawing" is checkable without
 * a real canvas.
 */

export const SEQ_LEN = 64;
export const MAX_PITCH = 127;
export const NOTE_OFF = 128;
export const NOTE_HOLD = 129;
export const BAR_EVERY = 16;
export const BEAT_EVERY = 4;

export type NoteBar = { pitch: number; start: number; length: number };

export class TokenError extends Error {
    constructor(message: string) {
        super(message);
        this.name = "TokenError";
    }
}

/** Decode tokens into note bars; throws TokenError on contract violations. */
export function tokensToBars(tokens: ArrayLike<number>): NoteBar[] {
    if (tokens.length !== SEQ_LEN) {
        throw new TokenError(`expected ${SEQ_LEN} tokens, got ${tokens.length}`);
    }
    const bars: NoteBar[] = [];
    let open: NoteBar | null = null;
    for (let step = 0; step < SEQ_LEN; step++) {
        const tok = tokens[step];
        if (!Number.isInteger(tok) || tok < 0 || tok > NOTE_HOLD) {
            throw new TokenError(`token ${tok} at step ${step} outside 0..${NOTE_HOLD}`);
        }
        if (tok === NOTE_HOLD) {
            if (open === null) {
                throw new TokenError(`hold at step ${step} continues no note`);
            }
            open.length += 1;
        } else if (tok === NOTE_OFF) {
            open = null;
        } else {
            open = { pitch: tok, start: step, length: 1 };
            bars.push(open);
        }
    }
    return bars;
}

export type DrawOp =
    | { kind: "clear"; width: number; height: number }
    | { kind: "gridline"; x: number; weight: "bar" | "beat" }
    | { kind: "note"; x: number; y: number; width: number; height: number };

export type RollLayout = {
    width: number;
    height: number;
    lowPitch: number;
    highPitch: number;
};

/** Pitch window shown on the roll: the notes' span padded by two rows,
 *  or a default octave around middle C for an empty window. */
export function pitchWindow(bars: NoteBar[]): { low: number; high: number } {
    if (bars.length === 0) return { low: 54, high: 66 };
    let low = MAX_PITCH;
    let high = 0;
    for (const bar of bars) {
        low = Math.min(low, bar.pitch);
        high = Math.max(high, bar.pitch);
    }
    return { low: Math.max(0, low - 2), high: Math.min(MAX_PITCH, high + 2) };
}

/** Deterministic draw plan: grid lines, then one rect per note bar. */
export function buildDrawOps(tokens: ArrayLike<number>, width: number, height: number): DrawOp[] {
    const bars = tokensToBars(tokens);
    const { low, high } = pitchWindow(bars);
    const rows = high - low + 1;
    const colW = width / SEQ_LEN;
    const rowH = height / rows;
    const ops: DrawOp[] = [{ kind: "clear", width, height }];
    for (let col = BEAT_EVERY; col < SEQ_LEN; col += BEAT_EVERY) {
        ops.push({
            kind: "gridline",
            x: col * colW,
            weight: col % BAR_EVERY === 0 ? "bar" : "beat",
        });
    }
    for (const bar of bars) {
        ops.push({
            kind: "note",
            x: bar.start * colW,
            y: (high - bar.pitch) * rowH,
            width: bar.length * colW,
            height: rowH,
        });
    }
    return ops;
}

const GRID_COLORS = { bar: "#555c68", beat: "#2e333b" };
const NOTE_COLOR = "#58b5f0";
const BACKGROUND = "#14171c";

/** Execute a draw plan on a 2D canvas context. Tokens are validated
 *  even when no context is available (headless environments). */
export function renderPianoRoll(canvas: HTMLCanvasElement, tokens: ArrayLike<number>): void {
    const ops = buildDrawOps(tokens, canvas.width, canvas.height);
    const ctx = canvas.getContext("2d");
    if (ctx === null) return;
    for (const op of ops) {
        switch (op.kind) {
            case "clear":
                ctx.fillStyle = BACKGROUND;
                ctx.fillRect(0, 0, op.width, op.height);
                break;
            case "gridline":
                ctx.strokeStyle = GRID_COLORS[op.weight];
                ctx.lineWidth = op.weight === "bar" ? 2 : 1;
                ctx.beginPath();
                ctx.moveTo(op.x, 0);
                ctx.lineTo(op.x, canvas.height);
                ctx.stroke();
                break;
            case "note":
                ctx.fillStyle = NOTE_COLOR;
                ctx.fillRect(op.x, op.y + 1, Math.max(op.width - 1, 1), Math.max(op.height - 2, 1));
                break;
        }
    }
}
