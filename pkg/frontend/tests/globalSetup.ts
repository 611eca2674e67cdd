// Spawns the real gateway (fixture database) for the scripted browser tests.

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

import { GATEWAY_PORT } from "./config";

let server: ChildProcess | undefined;

export default async function setup(): Promise<() => void> {
  const here = dirname(fileURLToPath(import.meta.url));
  const dbDir = resolve(here, "..", "..", "data", "db");
  const ratings = join(mkdtempSync(join(tmpdir(), "console-test-")), "ratings.jsonl");
  server = spawn(
    "remake",
    ["serve", "--db", dbDir, "--port", String(GATEWAY_PORT), "--ratings", ratings],
    { stdio: "ignore" },
  );
  const url = `http://127.0.0.1:${GATEWAY_PORT}/health`;
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const response = await fetch(url);
      if (response.ok) {
        return teardown;
      }
    } catch {
      // server still starting
    }
    await new Promise((resolveSleep) => setTimeout(resolveSleep, 100));
  }
  teardown();
  throw new Error("gateway did not become healthy");
}

function teardown(): void {
  if (server && !server.killed) {
    server.kill("SIGTERM");
  }
}
