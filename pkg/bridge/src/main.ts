#!/usr/bin/env node
/**
 * Bridge entry point.
 *
 *   toklink-bridge --port 9700                 # TCP on 127.0.0.1:9700
 *   toklink-bridge --stdio                     # frames over stdin/stdout
 *   toklink-bridge --port 9700 --backend pretrained --model-path /weights
 *
 * The default backend is the deterministic `toy` stand-in; `--steps N`
 * adjusts its iterative restoration schedule (default 16).
 */

import { loadBackend } from "./backend.js";
import { serveStdio, serveTcp } from "./server.js";

interface Args {
  port?: number;
  stdio: boolean;
  backend: "toy" | "pretrained";
  modelPath?: string;
  steps?: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { stdio: false, backend: "toy" };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    switch (flag) {
      case "--port":
        args.port = Number(argv[++i]);
        break;
      case "--stdio":
        args.stdio = true;
        break;
      case "--backend":
        args.backend = argv[++i] as Args["backend"];
        break;
      case "--model-path":
        args.modelPath = argv[++i];
        break;
      case "--steps":
        args.steps = Number(argv[++i]);
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!args.stdio && (args.port === undefined || !Number.isInteger(args.port))) {
    throw new Error("need --port N or --stdio");
  }
  return args;
}

function main(): void {
  let args: Args;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (exc) {
    console.error((exc as Error).message);
    process.exit(2);
  }
  let backend;
  try {
    backend = loadBackend({
      kind: args.backend,
      modelPath: args.modelPath,
      restoreSteps: args.steps,
    });
  } catch (exc) {
    console.error((exc as Error).message);
    process.exit(1);
  }
  if (args.stdio) {
    serveStdio(backend);
    return;
  }
  const server = serveTcp(backend, args.port!);
  server.on("listening", () => {
    const bound = (server.address() as import("node:net").AddressInfo).port;
    console.error(`toklink-bridge (${backend.name}) listening on 127.0.0.1:${bound}`);
  });
}

main();
