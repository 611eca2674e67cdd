import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    globals: true,
    globalSetup: ["tests/globalSetup.ts"],
    testTimeout: 60000,
    hookTimeout: 60000,
  },
});
