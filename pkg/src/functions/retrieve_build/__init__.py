# QA-pair retrieval corpus building
