import { describe, expect, it } from "vitest";

import { FaderLabClient } from "../src/api.js";
import { clampTarget, defaultFaderState, Session } from "../src/state.js";
import { STUB_MODELS, stubServer } from "./helpers/stub.js";

async function session(options = {}) {
    const stub = stubServer(options);
    const client = new FaderLabClient("", stub.fetch);
    return { stub, session: new Session(client, await client.listModels()) };
}

describe("fader metadata", () => {
    it("presets the controls from server defaults (w=3, steps=100)", () => {
        const state = defaultFaderState(STUB_MODELS[0]);
        expect(state.w).toBe(3.0);
        expect(state.steps).toBe(100);
        expect(state.target).toBe(STUB_MODELS[0].stats.mean);
        expect(state.seed).toBeNull();
    });

    it("maps the fader range to [0, p99] from the metadata", () => {
        const model = STUB_MODELS[0];
        expect(model.range[1]).toBe(model.stats.p99);
        expect(clampTarget(model, 0.75)).toBe(0.5);
        expect(clampTarget(model, -0.2)).toBe(0.0);
        expect(clampTarget(model, 0.31)).toBe(0.31);
        expect(clampTarget(model, Number.NaN)).toBe(0.0);
    });

    it("never sends a target outside the advertised range", async () => {
        const { stub, session: s } = await session();
        s.setTarget(99);
        await s.generate();
        const body = stub.calls.at(-1)?.body as { target: number };
        expect(body.target).toBe(0.5);
        s.setTarget(-4);
        await s.generate();
        expect((stub.calls.at(-1)?.body as { target: number }).target).toBe(0.0);
    });

    it("re-clamps the fader when switching models", async () => {
        const { session: s } = await session();
        s.setTarget(0.5);
        s.selectModel("contour.lcvae-se");
        expect(s.fader.attribute).toBe("contour");
        expect(s.fader.target).toBe(0.5); // still within [0, 2.25]
        s.setTarget(3.0);
        expect(s.fader.target).toBe(2.25);
        s.selectModel("note_density");
        expect(s.fader.target).toBe(0.5); // clamped down to the new p99
    });
});

describe("generation history", () => {
    it("locked seed with unchanged faders gives identical cards", async () => {
        const { session: s } = await session();
        s.setSeed(1234);
        s.setTarget(0.25);
        s.setCount(3);
        const first = await s.generate();
        const second = await s.generate();
        expect(first).not.toBeNull();
        expect(second).not.toBeNull();
        expect(second!.seed).toBe(first!.seed);
        expect(second!.sequences).toEqual(first!.sequences);
        expect(second!.measured).toEqual(first!.measured);
        expect(second!.generationIds).toEqual(first!.generationIds);
    });

    it("unlocked seed varies between generations", async () => {
        const { session: s } = await session();
        const first = await s.generate();
        const second = await s.generate();
        expect(second!.seed).not.toBe(first!.seed);
        expect(second!.sequences).not.toEqual(first!.sequences);
    });

    it("cards are immutable once created", async () => {
        const { session: s } = await session();
        s.setCount(2);
        const card = (await s.generate())!;
        expect(Object.isFrozen(card)).toBe(true);
        expect(Object.isFrozen(card.request)).toBe(true);
        expect(Object.isFrozen(card.sequences)).toBe(true);
        expect(Object.isFrozen(card.sequences[0])).toBe(true);
        expect(Object.isFrozen(card.measured[1])).toBe(true);
        expect(() => {
            (card.sequences as number[][])[0] = [];
        }).toThrow();
        s.setTarget(0.4);
        expect(card.request.target).not.toBe(0.4);
    });

    it("allows one in-flight request at a time", async () => {
        const { stub, session: s } = await session({ hold: true });
        const firstDone = s.generate();
        expect(s.pending).toBe(true);
        const second = await s.generate(); // refused immediately
        expect(second).toBeNull();
        expect(stub.calls.filter((c) => c.path.endsWith("/api/generate")))
            .toHaveLength(1);
        stub.release();
        const first = await firstDone;
        expect(first).not.toBeNull();
        expect(s.pending).toBe(false);
        stub.options.hold = false;
        const third = await s.generate();
        expect(third).not.toBeNull();
        expect(s.history).toHaveLength(2);
    });

    it("keeps state and history when the server errors", async () => {
        const { stub, session: s } = await session();
        await s.generate();
        stub.options.failNext = {
            status: 400,
            detail: [{ field: "steps", message: "steps must lie in [1, 1000]" }],
        };
        s.setTarget(0.4);
        const failed = await s.generate();
        expect(failed).toBeNull();
        expect(s.lastError).toContain("steps must lie in [1, 1000]");
        expect(s.history).toHaveLength(1);
        expect(s.fader.target).toBe(0.4); // state preserved for retry
        const retried = await s.generate();
        expect(retried).not.toBeNull();
        expect(s.lastError).toBeNull();
    });

    it("measured attributes agree with a re-query of the attributes endpoint", async () => {
        const stub = stubServer();
        const client = new FaderLabClient("", stub.fetch);
        const s = new Session(client, await client.listModels());
        s.setTarget(0.3);
        const card = (await s.generate())!;
        const requeried = await client.measureAttributes([...card.sequences[0]]);
        expect(card.measured[0]).toEqual(requeried);
    });
});
