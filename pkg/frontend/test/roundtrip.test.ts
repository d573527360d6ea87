/**
 * Round-trip acceptance: applying do(v=k) through the service updates the
 * view-model cards with values equal to a CLI replay of the serialized spec
 * (to displayed precision), completes within the latency budget, and
 * clearing the spec restores the factual values exactly.
 *
 * Spawns the Python CLI/service from the repository root; skips if the
 * interpreter or package is unavailable.
 */
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { buildCards, SpecBuilder } from "../src/viewmodel.js";
import type { IntervenePayload, StatesPayload } from "../src/types.js";

const repoRoot = join(__dirname, "..", "..");
const python = "python3";
let available = true;
try {
  execFileSync(python, ["-c", "import ccgm"], { cwd: repoRoot });
} catch {
  available = false;
}

const maybe = available ? describe : describe.skip;

maybe("workbench round trip against the live service", () => {
  let dir: string;
  let server: ChildProcess;
  let base: string;
  const port = 8477;

  beforeAll(async () => {
    dir = mkdtempSync(join(tmpdir(), "workbench-"));
    const csv = join(dir, "ck.csv");
    const ckpt = join(dir, "model.ckpt");
    execFileSync(python, ["-m", "ccgm.cli", "gen", "--dataset", "checkmark", "--n", "400",
      "--seed", "11", "--out", csv], { cwd: repoRoot });
    execFileSync(python, ["-m", "ccgm.cli", "train", "--data", csv, "--model", "cgm",
      "--epochs", "40", "--seed", "11", "--out", ckpt], { cwd: repoRoot });
    server = spawn(python, ["-m", "ccgm.cli", "serve", "--checkpoint", ckpt,
      "--addr", `127.0.0.1:${port}`, "--data", csv], { cwd: repoRoot });
    base = `http://127.0.0.1:${port}`;
    for (let i = 0; i < 50; i += 1) {
      try {
        const resp = await fetch(`${base}/health`);
        if (resp.ok) return;
      } catch { /* not up yet */ }
      await new Promise((r) => setTimeout(r, 200));
    }
    throw new Error("service did not come up");
  }, 120_000);

  afterAll(() => {
    server?.kill();
    rmSync(dir, { recursive: true, force: true });
  });

  it("matches a CLI replay of the serialized spec and restores on clear", async () => {
    const sampleRow = readFileSync(join(dir, "ck.csv"), "utf-8").split("\n")[1];
    const features = sampleRow.split(",").slice(0, 3).map(Number);
    await fetch(`${base}/sample`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ features }),
    });

    const spec = new SpecBuilder(["a", "b", "c", "d"]);
    spec.set("b", "do", 0);
    const started = performance.now();
    const resp = await fetch(`${base}/intervene`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ spec: spec.list() }),
    });
    const elapsed = performance.now() - started;
    expect(resp.ok).toBe(true);
    expect(elapsed).toBeLessThan(200);
    const payload = (await resp.json()) as IntervenePayload;
    const cards = buildCards(payload.after, payload.changed);

    const specFile = join(dir, "spec.json");
    writeFileSync(specFile, spec.serialize());
    const cliOut = execFileSync(python, ["-m", "ccgm.cli", "intervene",
      "--checkpoint", join(dir, "model.ckpt"), "--data", join(dir, "ck.csv"),
      "--sample", "0", "--spec", specFile], { cwd: repoRoot }).toString();
    const replay = JSON.parse(cliOut) as IntervenePayload;

    // UI card values equal the CLI replay to displayed precision
    const replayCards = buildCards(replay.after, replay.changed);
    expect(cards).toEqual(replayCards);
    // and the raw payload matches bit-for-bit (shared code path)
    expect(payload.after.probs).toEqual(replay.after.probs);

    // descendants of b were updated and marked
    expect(payload.changed).toContain("b");
    const bIdx = payload.after.nodes.indexOf("b");
    expect(payload.after.probs[bIdx]).toBe(0);

    // clearing the spec restores the factual prediction exactly
    const clearResp = await fetch(`${base}/intervene`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ spec: [] }),
    });
    const cleared = (await clearResp.json()) as IntervenePayload;
    expect(cleared.after).toEqual(payload.before);
  }, 60_000);

  it("factual prediction via the view model equals /predict payload", async () => {
    const resp = await fetch(`${base}/predict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({}),
    });
    const states = (await resp.json()) as StatesPayload;
    const cards = buildCards(states, []);
    expect(cards.map((c) => c.name)).toEqual(states.nodes);
    for (let i = 0; i < cards.length; i += 1) {
      expect(cards[i].prob).toBe(states.probs[i].toFixed(3));
    }
  });
});
