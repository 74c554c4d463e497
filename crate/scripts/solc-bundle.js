#!/usr/bin/env node
// Compiles Solidity files with solc-js and writes AST bundles next to them
// (or into --out DIR). Used to regenerate the compiler-produced fixtures.
//
//   SOLC_JS=/path/to/node_modules/solc node scripts/solc-bundle.js [--out DIR] FILE.sol...
const fs = require('fs');
const path = require('path');
const solc = require(process.env.SOLC_JS || 'solc');

const args = process.argv.slice(2);
let outDir = null;
if (args[0] === '--out') {
  outDir = args[1];
  args.splice(0, 2);
}
const version = solc.version().split('+')[0];
for (const file of args) {
  const name = path.basename(file);
  const source = fs.readFileSync(file, 'utf8');
  const input = {
    language: 'Solidity',
    sources: { [name]: { content: source } },
    settings: { outputSelection: { '*': { '': ['ast'] } } },
  };
  const out = JSON.parse(solc.compile(JSON.stringify(input)));
  const errors = (out.errors || []).filter((e) => e.severity === 'error');
  if (errors.length) {
    console.error(`${file}: ${errors.map((e) => e.formattedMessage).join('\n')}`);
    process.exitCode = 1;
    continue;
  }
  const bundle = { compiler_version: version, source_name: name, source, ast: out.sources[name].ast };
  const target = path.join(outDir || path.dirname(file), name.replace(/\.sol$/, '.ast.json'));
  fs.writeFileSync(target, JSON.stringify(bundle) + '\n');
}
