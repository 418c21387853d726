import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export interface EngineHandle {
  base: string;
  stop: () => Promise<void>;
}

function delay(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitHealthy(base: string, proc: ChildProcess): Promise<void> {
  const deadline = Date.now() + 45_000;
  while (Date.now() < deadline) {
    if (proc.exitCode !== null) {
      throw new Error(`engine exited early with code ${proc.exitCode}`);
    }
    try {
      const res = await fetch(`${base}/healthz`);
      if (res.ok) return;
    } catch {
      // not listening yet
    }
    await delay(150);
  }
  throw new Error(`engine at ${base} never became healthy`);
}

/**
 * Launch the engine service for one scenario and wait until its HTTP
 * surface answers. The run uses the flat-out virtual clock, so the
 * scenario is fully replayed by the time /healthz reports finished.
 */
export async function startEngine(scenario: string): Promise<EngineHandle> {
  const port = 8300 + Math.floor(Math.random() * 1500);
  const base = `http://127.0.0.1:${port}`;
  const store = mkdtempSync(join(tmpdir(), "console-store-"));
  const proc = spawn(
    "streamkg",
    [
      "run",
      "--scenario",
      scenario,
      "--serve",
      "--listen",
      `127.0.0.1:${port}`,
      "--realtime",
      "0",
      "--store",
      store,
    ],
    { stdio: "ignore" },
  );
  try {
    await waitHealthy(base, proc);
  } catch (err) {
    proc.kill("SIGKILL");
    throw err;
  }
  return {
    base,
    stop: async () => {
      proc.kill("SIGTERM");
      const gone = new Promise<void>((resolve) => proc.once("exit", () => resolve()));
      await Promise.race([gone, delay(3000).then(() => proc.kill("SIGKILL"))]);
    },
  };
}

export const SUITE_SCENARIOS = [
  "commotion_1",
  "hit_and_run_1",
  "hit_and_run_2",
  "pedestrian_collision_1",
  "vehicle_collision_1",
  "vehicle_collision_2",
] as const;
