import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // e2e tests each spawn a gateway process; keep files sequential
    fileParallelism: false,
    testTimeout: 20000,
    hookTimeout: 60000,
  },
});
