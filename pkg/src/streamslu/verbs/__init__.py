# slu verbs: one module per subcommand, each defining <Name>Verb
