import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { fileURLToPath } from "node:url";
import path from "node:path";

import { ConsoleClient } from "../src/api.js";

const FIXTURE = path.join(
  path.dirname(fileURLToPath(import.meta.url)),
  "fixtures",
  "serve_fixture.py",
);

export interface Fixture {
  port: number;
  token: string;
  client: ConsoleClient;
  proc: ChildProcessWithoutNullStreams;
  stop(): Promise<void>;
}

/** Spawn the python fixture server and wait for its READY line. */
export async function startFixture(scenario: "board" | "zero"): Promise<Fixture> {
  const proc = spawn("python3", [FIXTURE, scenario], {
    stdio: ["pipe", "pipe", "pipe"],
  });
  let stderr = "";
  proc.stderr.on("data", (chunk) => (stderr += chunk));

  const ready = await new Promise<string>((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => {
      reject(new Error(`fixture server never became ready\n${stderr}`));
    }, 20000);
    proc.stdout.on("data", (chunk) => {
      buffer += chunk;
      const m = buffer.match(/READY port=(\d+) token=(\S+)/);
      if (m) {
        clearTimeout(timer);
        resolve(`${m[1]} ${m[2]}`);
      }
    });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`fixture server exited early (${code})\n${stderr}`));
    });
  });

  const [portText, token] = ready.split(" ");
  const port = Number(portText);
  return {
    port,
    token,
    client: new ConsoleClient(`http://127.0.0.1:${port}`, token),
    proc,
    stop: () =>
      new Promise<void>((resolve) => {
        const killer = setTimeout(() => {
          proc.kill("SIGKILL");
          resolve();
        }, 5000);
        proc.on("exit", () => {
          clearTimeout(killer);
          resolve();
        });
        proc.stdin.end();
      }),
  };
}

export function waitFor<T>(
  probe: () => T | null | undefined,
  timeoutMs = 10000,
  label = "condition",
): Promise<T> {
  return new Promise((resolve, reject) => {
    const started = Date.now();
    const poll = () => {
      const value = probe();
      if (value !== null && value !== undefined) return resolve(value);
      if (Date.now() - started > timeoutMs) {
        return reject(new Error(`timed out waiting for ${label}`));
      }
      setTimeout(poll, 50);
    };
    poll();
  });
}
