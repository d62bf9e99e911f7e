import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'happy-dom',
    environmentOptions: {
      happyDOM: {
        // round-trip tests talk to a local server on a per-run port, so
        // the page origin can never match it
        settings: { fetch: { disableSameOriginPolicy: true } },
      },
    },
    include: ['tests/**/*.test.ts'],
    // round-trip tests spawn a real server process
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
